fn main() {
    let code = multidml::cli::run(std::env::args());
    std::process::exit(code);
}
