fn main() {
    std::process::exit(bacalarm_cli::run_from_env());
}
