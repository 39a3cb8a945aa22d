use clap::Parser;
use plurality_sim::cli::{run, Cli};

fn main() -> anyhow::Result<()> {
    run(Cli::parse())
}
