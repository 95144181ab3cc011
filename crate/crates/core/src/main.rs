fn main() {
    std::process::exit(chartcode::cli::run(std::env::args_os()));
}
