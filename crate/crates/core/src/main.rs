fn main() {
    std::process::exit(peritumor::cli::run(std::env::args_os()));
}
