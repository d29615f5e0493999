//! All stages on a miniature project: generate, featurize, train, fit the
//! fusers and run every scenario. Takes about a minute.

use dualkws::cli::{Project, ProjectConfig};
use dualkws::eval::ScenarioKind;
use dualkws::pipeline::Modality;

fn main() -> dualkws::Result<()> {
    let mut config = ProjectConfig::reference(11);
    config.dataset.per_command = 4;
    config.dataset.unknown = 6;
    config.dataset.silence = 4;
    config.train.warmup_epochs = 2;
    config.train.total_epochs = 12;
    config.fusion.rb.ga.population = 16;
    config.fusion.rb.ga.generations = 10;
    config.fusion.rb.prerun_generations = 5;
    config.fusion.mlp.epochs = 30;
    config.fusion.augment.copies = 1;
    let root = std::env::temp_dir().join("dualkws-example-project");
    let project = Project::new(config, &root, 2);
    print!("{}", project.generate()?);
    project.featurize()?;
    for m in [Modality::Vocal, Modality::Echoic] {
        let [train, tune, test] = project.train(m)?;
        println!("{}: train {train:.2} tune {tune:.2} test {test:.2}", m.name());
    }
    project.fit_fusion(true, true)?;
    for r in project.evaluate(&ScenarioKind::ALL)? {
        print!("{}", r.to_csv());
    }
    println!("artifacts in {}", root.display());
    Ok(())
}
