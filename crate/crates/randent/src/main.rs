fn main() {
    std::process::exit(randent::cli::run());
}
