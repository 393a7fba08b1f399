//! Writes fixture banks to disk as ready-to-run pipeline inputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use synonymix_core::fixture::{four_persona_fixture, gen_fixture, gen_survey, FixtureSpec};
use synonymix_core::graph::{save_persona, PersonaGraph};
use synonymix_core::metrics::save_items;

use crate::config::PipelineConfig;

/// Size of the generated survey: 69 ordinal and 12 nominal items, 30 respondents per bank.
pub const SURVEY_SHAPE: (usize, usize, usize) = (69, 12, 30);

pub enum FixtureKind {
    Generated(FixtureSpec),
    FourPersona,
}

/// Writes `personas/*.json`, optionally a survey (`items.json`, `d.csv`,
/// `l.csv`, `f.csv`), and a `synonymix.toml` wired to them. Returns the config path.
pub fn write_fixture(dir: &Path, kind: &FixtureKind, survey: bool, seed: u64) -> Result<PathBuf> {
    let bank: Vec<PersonaGraph> = match kind {
        FixtureKind::Generated(spec) => gen_fixture(spec)?,
        FixtureKind::FourPersona => four_persona_fixture(),
    };
    let personas = dir.join("personas");
    fs::create_dir_all(&personas).with_context(|| format!("cannot create {}", personas.display()))?;
    for g in &bank {
        fs::write(personas.join(format!("{}.json", g.persona_id)), save_persona(g))?;
    }
    let mut config = PipelineConfig { seed, ..PipelineConfig::default() };
    config.paths.personas = "personas".into();
    config.paths.out_dir = "out".into();
    if survey {
        let (ordinal, nominal, respondents) = SURVEY_SHAPE;
        let (items, [d, l, f]) = gen_survey(ordinal, nominal, respondents, seed);
        fs::write(dir.join("items.json"), save_items(&items))?;
        for (name, table) in [("d.csv", &d), ("l.csv", &l), ("f.csv", &f)] {
            fs::write(dir.join(name), table.to_csv())?;
        }
        config.paths.items = Some("items.json".into());
        config.paths.bank_d = Some("d.csv".into());
        config.paths.bank_l = Some("l.csv".into());
        config.paths.bank_f = Some("f.csv".into());
    } else {
        config.evaluate.skip = true;
    }
    let path = dir.join("synonymix.toml");
    fs::write(&path, config.to_toml())?;
    Ok(path)
}
