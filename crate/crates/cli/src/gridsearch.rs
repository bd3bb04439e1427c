//! Feature-constant grid search over the leading demonstrations.

use std::collections::BTreeSet;

use dmval_core::irl::{rank_scores, score_constants, ConstantsScore, RankedConstants};
use rayon::prelude::*;

use crate::config::{write_json, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::extract::{load_demos, DemoManifest};

pub const RANKING_FILE: &str = "ranking.json";

/// Scores every grid combination on the first `gridsearch_demos`
/// demonstrations and writes the ranking.
pub fn cmd_gridsearch(
    cfg: &PipelineConfig,
    manifest: &DemoManifest,
) -> CliResult<Vec<RankedConstants>> {
    let wanted: BTreeSet<String> = manifest
        .demos
        .iter()
        .take(cfg.gridsearch_demos)
        .map(|e| e.demo_id.clone())
        .collect();
    if wanted.is_empty() {
        return Err(CliError::Data(dmval_core::Error::Contract(
            "grid search needs at least one demonstration".into(),
        )));
    }
    let demos = load_demos(cfg, manifest, &wanted)?;
    let combos = cfg.grid.combinations();
    let jobs: Vec<(usize, usize)> = (0..combos.len())
        .flat_map(|c| (0..demos.len()).map(move |d| (c, d)))
        .collect();

    let partial: Vec<dmval_core::Result<ConstantsScore>> =
        crate::train::pool(cfg.jobs)?.install(|| {
            jobs.par_iter()
                .map(|&(c, d)| {
                    let demo = &demos[d];
                    score_constants(
                        std::slice::from_ref(demo),
                        combos[c],
                        cfg.theta_init,
                        &cfg.optimizer,
                        &cfg.agent_for(demo.dt),
                    )
                })
                .collect()
        });
    let mut scores: Vec<ConstantsScore> = combos
        .iter()
        .map(|&constants| ConstantsScore {
            constants,
            desirable: 0,
            converged: 0,
            evaluated: 0,
        })
        .collect();
    for (&(c, _), s) in jobs.iter().zip(partial) {
        let s = s?;
        scores[c].desirable += s.desirable;
        scores[c].converged += s.converged;
        scores[c].evaluated += s.evaluated;
    }
    let ranking = rank_scores(scores, &cfg.grid);

    let dir = cfg.stage_dir("gridsearch");
    cfg.write_into(&dir)?;
    write_json(&dir.join(RANKING_FILE), &ranking)?;
    let path = dir.join("ranking.csv");
    let mut text =
        String::from("rank,c,sigma_x,sigma_y,desirable,converged,evaluated,tied_for_best\n");
    for r in &ranking {
        let k = r.score.constants;
        text += &format!(
            "{},{},{},{},{},{},{},{}\n",
            r.rank,
            k.c,
            k.sigma_x,
            k.sigma_y,
            r.score.desirable,
            r.score.converged,
            r.score.evaluated,
            r.tied_for_best
        );
    }
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(ranking)
}
