fn main() {
    std::process::exit(shearlab_cli::run_cli(std::env::args_os()));
}
