fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let args: Vec<String> = std::env::args().collect();
    let code = cothought_cli::main_with(args, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
