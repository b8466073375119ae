fn main() {
    std::process::exit(finitary::cli::run());
}
