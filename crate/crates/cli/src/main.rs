fn main() {
    std::process::exit(sentstruct::cli::run(std::env::args_os()));
}
