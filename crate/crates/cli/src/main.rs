use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&cancel);
    // A second Ctrl-C exits immediately.
    let installed = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("interrupt: finishing in-flight entries");
    });
    if let Err(e) = installed {
        log::warn!("no interrupt handler: {e}");
    }
    let argv: Vec<String> = std::env::args().collect();
    let code = szz_cli::dispatch_with(
        &argv,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
        Some(&cancel),
    );
    std::process::exit(code);
}
