fn main() {
    std::process::exit(corelot::cli::run(std::env::args_os()));
}
