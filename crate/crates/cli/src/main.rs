fn main() {
    std::process::exit(dor_cli::run(std::env::args_os()));
}
