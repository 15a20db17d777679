fn main() {
    std::process::exit(lucgen::cli::run(std::env::args_os()));
}
