fn main() {
    let code = revsle_core::cli::dispatch(std::env::args());
    std::process::exit(code);
}
