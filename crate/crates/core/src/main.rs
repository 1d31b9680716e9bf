fn main() {
    std::process::exit(geodyn::cli::run(std::env::args_os()));
}
