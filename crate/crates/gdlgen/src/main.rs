fn main() {
    std::process::exit(gdlgen::cli::run());
}
