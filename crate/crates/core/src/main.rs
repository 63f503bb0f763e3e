fn main() {
    std::process::exit(bypasslab::cli::main());
}
