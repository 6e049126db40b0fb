fn main() {
    std::process::exit(ionfield::cli::main());
}
