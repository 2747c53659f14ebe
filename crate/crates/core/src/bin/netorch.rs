fn main() {
    std::process::exit(netorch::cli::main_from_env());
}
