// Drive the batch front-end from a TOML config, as `pdnx compare` would.

use pdnx::cli;

const CONFIG: &str = r#"
architectures = ["A1", "A2", "A3@12V"]
topologies = ["DSCH"]

[output]
formats = ["csv", "txt"]
"#;

pub fn run_example() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join(format!("pdnx-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("run.toml");
    std::fs::write(&config, CONFIG)?;
    let out = dir.join("out");

    let args = ["pdnx", "compare", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let code = cli::run(args, &mut stdout, &mut stderr);
    print!("{}", String::from_utf8_lossy(&stdout));
    anyhow::ensure!(code == cli::EXIT_OK, "exit {code}: {}", String::from_utf8_lossy(&stderr));
    print!("{}", std::fs::read_to_string(out.join("comparison.txt"))?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
