fn main() {
    std::process::exit(g2r_cli::run(std::env::args_os().skip(1)));
}
