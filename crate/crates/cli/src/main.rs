use std::io;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = capcoupled_cli::run_from(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
