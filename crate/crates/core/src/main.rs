use clap::Parser;
use weylscale::cli::{run, Args};

fn main() {
    let args = Args::parse();
    let outcome = run(&args);
    for f in &outcome.files {
        println!("{}", f.display());
    }
    std::process::exit(outcome.code);
}
