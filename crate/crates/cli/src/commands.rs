use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use crisp_core::cohort::{write_descriptors, Cohort};
use crisp_core::evaluation::{grid_search, lopo_evaluate, GridSpec, DEFAULT_K_SET};
use crisp_core::patchdesc::{filter_and_describe, load_tiles, scan_tile_dir};
use crisp_core::pipeline::{
    case_pool, reduce_case, signature_for, splice_cohort, CaseReduction, Collages, CrispParams,
};
use crisp_core::report::{grid_csv, write_canonical_json};
use crisp_core::retrieval::rank_archive;
use crisp_core::splice::SlideCollage;
use crisp_core::synthgen::{generate, SynthSpec, TissueLayout};

use crate::args::*;
use crate::outputs::*;
use crate::settings::{parse_metrics, parse_topk, Settings, SEED_ENV};
use crate::values::{parse_count_range, parse_values, whole};
use crate::Failure;

struct Ctx {
    workdir: PathBuf,
    settings: Settings,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }

    fn cohort(&self, manifest: &Path) -> Result<Cohort, Failure> {
        let path = self.path(manifest);
        if !path.is_file() {
            return Err(Failure::Usage(format!("manifest not found: {}", path.display())));
        }
        Ok(Cohort::from_manifest_path(&path)?)
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, p: &Path) -> Result<T, Failure> {
        let path = self.path(p);
        if !path.is_file() {
            return Err(Failure::Usage(format!("input not found: {}", path.display())));
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    }

    fn write_json<T: serde::Serialize>(&self, p: &Path, value: &T) -> Result<PathBuf, Failure> {
        let path = self.path(p);
        ensure_parent(&path)?;
        write_canonical_json(&path, value)?;
        Ok(path)
    }
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn reduction(r: Reduction) -> CaseReduction {
    match r {
        Reduction::Kmeans => CaseReduction::KMeans,
        Reduction::SpliceReselect => CaseReduction::SpliceReselect,
    }
}

fn invalid(e: String) -> Failure {
    Failure::Invalid(vec![e])
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let workdir = match &cli.workdir {
        Some(d) if !d.is_dir() => return Err(Failure::Usage(format!("workdir not found: {}", d.display()))),
        Some(d) => d.clone(),
        None => PathBuf::from("."),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let config = cli
        .config
        .as_ref()
        .map(|c| if c.is_absolute() { c.clone() } else { workdir.join(c) });
    let settings = Settings::load(config.as_deref(), env_seed.as_deref())?;
    let mut ctx = Ctx { workdir, settings };
    match &cli.command {
        Command::Descriptors(a) => descriptors(&mut ctx, a),
        Command::Splice(a) => splice(&mut ctx, a),
        Command::Mosaic(a) => mosaic(&mut ctx, a),
        Command::Retrieve(a) => retrieve(&mut ctx, a),
        Command::Evaluate(a) => evaluate(&mut ctx, a),
        Command::Gridsearch(a) => gridsearch(&mut ctx, a),
        Command::Synth(a) => synth(&mut ctx, a),
    }
}

fn descriptors(ctx: &mut Ctx, a: &DescriptorsArgs) -> Result<(), Failure> {
    let s = &mut ctx.settings;
    if let Some(v) = a.occ_min {
        s.occ_min = v;
    }
    if let Some(v) = a.bg_threshold {
        s.bg_threshold = v;
    }
    if let Some(v) = a.tile_size {
        s.tile_size = v;
    }
    let cfg = s.single()?;
    let tiles_dir = ctx.path(&a.tiles);
    if !tiles_dir.is_dir() {
        return Err(Failure::Usage(format!(
            "tile directory not found: {}",
            tiles_dir.display()
        )));
    }
    let out = ctx.path(&a.out);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let slides = scan_tile_dir(&tiles_dir)?;
    if slides.is_empty() {
        log::warn!("no tiles found in {}", tiles_dir.display());
    }
    for (slide, paths) in &slides {
        let tiles = load_tiles(paths, cfg.tile_size)?;
        let outcome = filter_and_describe(slide, &tiles, cfg.occ_min, cfg.bg_threshold as u8)?;
        write_descriptors(&out.join(format!("{slide}.csv")), &outcome.records)?;
        println!("{slide}: kept {} of {} tiles", outcome.records.len(), tiles.len());
    }
    Ok(())
}

fn splice(ctx: &mut Ctx, a: &SpliceArgs) -> Result<(), Failure> {
    if let Some(v) = a.s_t {
        ctx.settings.s_t = vec![v];
    }
    let cfg = ctx.settings.single()?;
    let cohort = ctx.cohort(&a.manifest)?;
    let collages = splice_cohort(cohort.cases.iter().map(|c| &c.case), cfg.params().splice())?;
    let doc: CollagesDoc = collages
        .into_iter()
        .map(|(id, c)| {
            (
                id,
                CollageDoc {
                    kept: c.kept,
                    discarded: c.discarded_count,
                },
            )
        })
        .collect();
    let kept: usize = doc.values().map(|c| c.kept.len()).sum();
    let path = ctx.write_json(&a.out, &doc)?;
    println!("{}: {} slides, {kept} patches kept", path.display(), doc.len());
    Ok(())
}

fn mosaic(ctx: &mut Ctx, a: &MosaicArgs) -> Result<(), Failure> {
    let s = &mut ctx.settings;
    if let Some(v) = a.k {
        s.k = vec![v as f64];
    }
    if let Some(v) = a.alpha {
        s.alpha = vec![v];
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.s_t {
        s.s_t = vec![v];
    }
    let cfg = s.single()?;
    let params = CrispParams {
        reduction: reduction(a.reduction),
        ..cfg.params()
    };
    let cohort = ctx.cohort(&a.manifest)?;
    let doc: CollagesDoc = ctx.read_json(&a.collages)?;
    let collages: Collages = doc
        .into_iter()
        .map(|(id, c)| {
            let collage = SlideCollage {
                slide_id: id.clone(),
                kept: c.kept,
                discarded_count: c.discarded,
            };
            (id, collage)
        })
        .collect();
    let pools = cohort
        .cases
        .iter()
        .map(|c| case_pool(&c.case, &collages))
        .collect::<Result<Vec<_>, _>>()
        .context("collages do not match the manifest")?;
    let selections = crisp_core::par::map_range(pools.len(), |i| {
        reduce_case(&cohort.cases[i].case.case_id, &pools[i], &params)
    });

    let mut out = MosaicsDoc::new();
    for ((case, pool), sel) in cohort.cases.iter().zip(&pools).zip(selections) {
        let entry = match sel {
            Ok(m) => {
                let mut clusters: BTreeMap<usize, ClusterDoc> = BTreeMap::new();
                for p in pool {
                    if let Some(&c) = m.cluster_assignments.get(&p.patch_id) {
                        clusters
                            .entry(c)
                            .or_insert_with(|| ClusterDoc {
                                members: Vec::new(),
                                kept: m.per_cluster_kept.get(&c).cloned().unwrap_or_default(),
                            })
                            .members
                            .push(p.patch_id.clone());
                    }
                }
                MosaicDoc {
                    kept: m.kept,
                    clusters,
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("case {}: {e}", case.case.case_id);
                MosaicDoc {
                    kept: Vec::new(),
                    clusters: BTreeMap::new(),
                    error: Some(e),
                }
            }
        };
        out.insert(case.case.case_id.clone(), entry);
    }
    let kept: usize = out.values().map(|m| m.kept.len()).sum();
    let path = ctx.write_json(&a.out, &out)?;
    println!("{}: {} cases, {kept} patches kept", path.display(), out.len());
    Ok(())
}

fn retrieve(ctx: &mut Ctx, a: &RetrieveArgs) -> Result<(), Failure> {
    if let Some(m) = &a.metric {
        ctx.settings.metrics = parse_metrics(m).map_err(invalid)?;
    }
    let cfg = ctx.settings.single()?;
    if a.top == 0 {
        return Err(invalid("top must be at least 1".into()));
    }
    let cohort = ctx.cohort(&a.manifest)?;
    let mosaics: MosaicsDoc = ctx.read_json(&a.mosaics)?;
    let query_case = cohort
        .case(&a.query)
        .ok_or_else(|| Failure::Usage(format!("query case `{}` is not in the manifest", a.query)))?;
    let query_mosaic = mosaics
        .get(&a.query)
        .ok_or_else(|| anyhow!("no mosaic for query case `{}`", a.query))?;
    if let Some(e) = &query_mosaic.error {
        return Err(anyhow!("query case `{}` has no mosaic: {e}", a.query).into());
    }
    let query = signature_for(query_case, &query_mosaic.kept)?;
    query.validate_for(cfg.metric)?;

    let mut archive = Vec::new();
    for case in &cohort.cases {
        let id = &case.case.case_id;
        if *id == a.query {
            continue;
        }
        let Some(m) = mosaics.get(id).filter(|m| m.error.is_none()) else {
            log::warn!("case {id}: no usable mosaic, left out of the archive");
            continue;
        };
        let sig = signature_for(case, &m.kept)?;
        match sig.validate_for(cfg.metric) {
            Ok(()) => archive.push(sig),
            Err(e) => log::warn!("case {id}: {e}, left out of the archive"),
        }
    }
    let refs: Vec<_> = archive.iter().collect();
    let ranking = rank_archive(&query, &refs, cfg.metric)?;
    let doc = RankingDoc {
        query: ranking.query,
        label: query.label.clone(),
        metric: ranking.metric,
        direction: ranking.direction,
        archive_size: refs.len(),
        entries: ranking.entries.into_iter().take(a.top).collect(),
    };
    let path = ctx.write_json(&a.out, &doc)?;
    if let Some(best) = doc.entries.first() {
        println!(
            "{}: top match {} ({}) score {:.4}",
            path.display(),
            best.case_id,
            best.label,
            best.score
        );
    }
    Ok(())
}

fn evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> Result<(), Failure> {
    let s = &mut ctx.settings;
    if let Some(v) = a.s_t {
        s.s_t = vec![v];
    }
    if let Some(v) = a.k {
        s.k = vec![v as f64];
    }
    if let Some(v) = a.alpha {
        s.alpha = vec![v];
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(m) = &a.metric {
        s.metrics = parse_metrics(m).map_err(invalid)?;
    }
    if let Some(t) = &a.topk {
        s.topk = Some(parse_topk(t).map_err(invalid)?);
    }
    let cfg = s.single()?;
    let params = CrispParams {
        reduction: reduction(a.reduction),
        ..cfg.params()
    };
    let cohort = ctx.cohort(&a.manifest)?;
    let eval = lopo_evaluate(&cohort, &params, cfg.metric, &cfg.k_set)?;
    let path = ctx.write_json(&a.out, &eval)?;
    let scores: Vec<String> = eval
        .report
        .macro_f1
        .iter()
        .map(|(k, f)| format!("top{k} {f:.4}"))
        .collect();
    println!("{}: macro-F1 {}", path.display(), scores.join(", "));
    Ok(())
}

fn gridsearch(ctx: &mut Ctx, a: &GridArgs) -> Result<(), Failure> {
    let s = &mut ctx.settings;
    let mut errs = Vec::new();
    for (flag, target) in [(&a.s_t, &mut s.s_t), (&a.k, &mut s.k), (&a.alpha, &mut s.alpha)] {
        if let Some(text) = flag {
            match parse_values(text) {
                Ok(v) => *target = v,
                Err(e) => errs.push(e),
            }
        }
    }
    if let Some(m) = &a.metric {
        match parse_metrics(m) {
            Ok(m) => s.metrics = m,
            Err(e) => errs.push(e),
        }
    }
    if let Some(t) = &a.topk {
        match parse_topk(t) {
            Ok(t) => s.topk = Some(t),
            Err(e) => errs.push(e),
        }
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    let k = whole(&s.k, "K").unwrap_or_else(|e| {
        errs.push(e);
        Vec::new()
    });
    if !errs.is_empty() {
        return Err(Failure::Invalid(errs));
    }
    let spec = GridSpec {
        s_t: s.s_t.clone(),
        k,
        alpha: s.alpha.clone(),
        metrics: s.metrics.clone(),
        k_set: s.topk.clone().unwrap_or_else(|| DEFAULT_K_SET.to_vec()),
        seed: s.seed,
    };
    spec.validate()?;
    let cohort = ctx.cohort(&a.manifest)?;
    log::info!("evaluating {} grid points", spec.len());
    let result = grid_search(&cohort, &spec)?;
    let path = ctx.path(&a.out);
    ensure_parent(&path)?;
    fs::write(&path, grid_csv(&result.points)).with_context(|| format!("writing {}", path.display()))?;
    println!("{}: {} points", path.display(), result.points.len());
    for b in &result.best {
        let p = &result.points[b.index];
        println!(
            "best {} top{}: {:.4} at s_t={} K={} alpha={:.2}",
            b.metric, b.k, b.macro_f1, p.s_t, p.k, p.alpha
        );
    }
    Ok(())
}

fn synth(ctx: &mut Ctx, a: &SynthArgs) -> Result<(), Failure> {
    let slides = parse_count_range(&a.slides_per_case).map_err(invalid)?;
    let patches = parse_count_range(&a.patches_per_slide).map_err(invalid)?;
    let layout = match a.shared_fraction {
        Some(shared_fraction) => TissueLayout::PerSlideModes {
            shared_fraction,
            modes_per_slide: a.modes_per_slide,
        },
        None => TissueLayout::Homogeneous,
    };
    let spec = SynthSpec {
        n_classes: a.classes,
        cases_per_class: a.cases_per_class,
        slides_per_case: slides,
        patches_per_slide: patches,
        class_mode_separation: a.separation,
        redundancy_rate: a.redundancy,
        embed_dim: a.dim,
        seed: a.seed.unwrap_or(ctx.settings.seed),
        layout,
    };
    spec.validate()?;
    let out = ctx.path(&a.out);
    let manifest = generate(&spec, &out)?;
    let patches: usize = manifest.cases.iter().map(|c| c.case.patch_count()).sum();
    println!(
        "{}: {} cases, {patches} patches",
        out.join("manifest.json").display(),
        manifest.cases.len()
    );
    Ok(())
}
