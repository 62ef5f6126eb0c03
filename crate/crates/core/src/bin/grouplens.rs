fn main() {
    std::process::exit(grouplens::cli::run());
}
