fn main() {
    std::process::exit(vacq::cli::run());
}
