fn main() {
    std::process::exit(dpfe::cli::run(std::env::args_os()));
}
