//! Save a body model as a JSON manifest with a binary blob, load it back and
//! check that it skins identically.
//!
//! Usage: cargo run --example model_io [OUT_DIR]

use std::path::PathBuf;

use liquidwarp::body::{read_model, skin, write_model, write_model_inline};
use liquidwarp::synthetic;

fn main() -> liquidwarp::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lw-model"));
    std::fs::create_dir_all(&out)?;

    let model = synthetic::humanoid();
    write_model(&model, &out.join("model.json"))?;
    write_model_inline(&model, &out.join("model_inline.json"))?;
    let (params, _) = synthetic::params_pair(2);
    std::fs::write(out.join("params.json"), params.to_json())?;

    for name in ["model.json", "model_inline.json"] {
        let loaded = read_model(&out.join(name))?;
        let a = skin(&model, &params)?;
        let b = skin(&loaded, &params)?;
        let worst = a.vertices.iter().zip(&b.vertices).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max);
        // Arrays are stored as 32-bit floats.
        println!("{name}: {} vertices, max skinning difference {worst:.2e}", loaded.num_vertices());
    }
    println!("groups: {:?}", model.vertex_groups().keys().collect::<Vec<_>>());
    println!("wrote {}", out.display());
    Ok(())
}
