use std::process::exit;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    exit(multiview_embed::cli::dispatch(std::env::args_os()));
}
