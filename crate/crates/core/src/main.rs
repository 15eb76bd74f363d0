fn main() {
    std::process::exit(qperc::cli::parse_and_dispatch(std::env::args_os()));
}
