fn main() {
    std::process::exit(slln_cli::run(std::env::args_os()));
}
