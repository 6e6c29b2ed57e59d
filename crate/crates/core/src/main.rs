fn main() {
    std::process::exit(memoryscape::cli::run());
}
