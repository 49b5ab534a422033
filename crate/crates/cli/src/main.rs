fn main() {
    std::process::exit(cohortgate_cli::main_with(std::env::args_os()));
}
