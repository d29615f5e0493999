//! Renders a small reference dataset to a temporary directory.

use dualkws::sim::{generate_dataset, DatasetSpec, SceneSpec, Split, SyntheticVocabulary};

fn main() -> dualkws::Result<()> {
    let dir = std::env::temp_dir().join("dualkws-example-dataset");
    std::fs::create_dir_all(&dir).map_err(|e| dualkws::Error::io(&dir, e))?;
    let spec = DatasetSpec {
        per_command: 2,
        unknown: 3,
        silence: 2,
        ..DatasetSpec::default()
    };
    let entries = generate_dataset(&SyntheticVocabulary::reference(0), &SceneSpec::default(), &spec, &dir, 2)?;
    for split in [Split::Train, Split::Tune, Split::Test] {
        println!("{split:?}: {}", entries.iter().filter(|e| e.split == split).count());
    }
    println!("written to {}", dir.display());
    Ok(())
}
