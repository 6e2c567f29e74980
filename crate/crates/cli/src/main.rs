fn main() {
    let code = spider_cli::run(std::env::args_os());
    std::process::exit(code);
}
