fn main() {
    std::process::exit(vortex_herald_cli::parse_and_dispatch(std::env::args_os()));
}
