fn main() {
    std::process::exit(bandit_poison_cli::main_with_args(std::env::args_os()));
}
