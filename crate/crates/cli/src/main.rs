use clap::Parser;

fn main() -> anyhow::Result<()> {
    alienzoo_cli::run(alienzoo_cli::Cli::parse())
}
