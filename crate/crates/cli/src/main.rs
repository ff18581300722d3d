use clap::Parser;
use isac_sim::{init_thread_pool, report, run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match init_thread_pool().and_then(|()| run(&cli)) {
        Ok((path, summary)) => {
            println!("wrote {}", path.display());
            if !summary.is_empty() {
                println!("{summary}");
            }
            0
        }
        Err(e) => {
            report(&format!("isac-sim: {e}"));
            e.exit_code()
        }
    };
    std::process::exit(code);
}
