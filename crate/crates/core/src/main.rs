fn main() {
    std::process::exit(qgraph::cli::run_cli(std::env::args_os()));
}
