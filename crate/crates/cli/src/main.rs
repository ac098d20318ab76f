fn main() {
    std::process::exit(trajxai_cli::run(std::env::args_os()));
}
