fn main() {
    std::process::exit(brainplate_cli::run_cli(std::env::args_os()));
}
