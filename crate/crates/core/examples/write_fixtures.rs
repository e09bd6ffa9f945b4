//! Regenerates the bundled example data under `data/`.
//!
//! ```text
//! cargo run -p pfmatch --example write_fixtures
//! ```

use std::fs;
use std::path::Path;

use pfmatch::fixtures;
use pfmatch::roadnet::features_to_geojson;
use pfmatch::simulate::{simulate_seeded, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    fs::create_dir_all(&dir)?;

    let grid = fixtures::grid_features(6, 100.0);
    let y = fixtures::y_junction_features();
    fs::write(
        dir.join("grid.geojson"),
        serde_json::to_string_pretty(&features_to_geojson(&grid))? + "\n",
    )?;
    fs::write(
        dir.join("y_junction.geojson"),
        serde_json::to_string_pretty(&features_to_geojson(&y))? + "\n",
    )?;

    let net = fixtures::build(&grid);
    let (traj, truth) = simulate_seeded(&net, &sample_config())?;
    fs::write(dir.join("sample_trajectory.csv"), traj.to_csv_string())?;
    fs::write(
        dir.join("sample_truth.json"),
        serde_json::to_string_pretty(&truth)? + "\n",
    )?;
    println!("wrote {}", dir.canonicalize()?.display());
    Ok(())
}

fn sample_config() -> SimConfig {
    SimConfig {
        duration: 120.0,
        seed: 7,
        ..SimConfig::default()
    }
}
