fn main() {
    std::process::exit(gera::cli::run(std::env::args_os()));
}
