fn main() {
    std::process::exit(factsplan::cli::run());
}
