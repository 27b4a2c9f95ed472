fn main() {
    std::process::exit(paralab::cli::run(std::env::args_os()));
}
