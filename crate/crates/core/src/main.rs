fn main() {
    scent::cli::init_logging();
    let code = scent::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
