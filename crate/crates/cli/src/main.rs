fn main() {
    std::process::exit(gazedrive_cli::run(std::env::args_os()));
}
