use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use causaltest::covariate::{build_problem, solve_tau, StratifiedTable, Stratum};
use causaltest::finitepop::{fpc_threshold, ResampleConfig};
use causaltest::ingest::{load_counts, load_stratified, MicrodataSpec};
use causaltest::oracle::{run_suite, SuiteConfig};
use causaltest::randomness::{lower_bound_eta, parse_concordance, ConcordanceEvidence, ConcordanceKind};
use causaltest::tables::{adjusted_rr, measures, AssociationKind, Counts2x2, MarginalSummary};
use causaltest::threshold::{threshold, threshold_from_measure};

use crate::report::{
    source_label, AdjustedSection, EvidenceEcho, FpcSection, InputEcho, RandomnessSection,
    StratumDiagnostics, StratumEcho, SummaryEcho, TestReport, ThresholdSection, VerifyReport,
};
use crate::{AdjustArgs, CliError, EvidenceArgs, FpcArgs, IngestArgs, SamplingArgs, TableInput, TestArgs, VerifyArgs};

/// Prevalence overrides further than this from the table draw a warning.
const PREVALENCE_WARN: f64 = 0.05;

pub(crate) fn parse_table(s: &str) -> Result<Counts2x2, CliError> {
    let cells: Vec<u64> = s
        .split(',')
        .map(|c| c.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--table expects four non-negative integers x01,x11,x00,x10, got `{s}`")))?;
    let cells: [u64; 4] = cells
        .try_into()
        .map_err(|_| CliError::Usage(format!("--table expects exactly four counts, got `{s}`")))?;
    Ok(Counts2x2::from_array(cells))
}

fn parse_measure(s: &str) -> Result<(AssociationKind, f64), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--measure expects KIND=VALUE (e.g. rr=5.8), got `{s}`")))?;
    let kind: AssociationKind = k.parse().map_err(|e: causaltest::Error| CliError::Usage(e.to_string()))?;
    let value: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("cannot parse measure value `{v}`")))?;
    Ok((kind, value))
}

fn read_spec(path: &Path) -> Result<MicrodataSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(MicrodataSpec::parse(&text)?)
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

enum Resolved {
    Table(Counts2x2),
    Summary(MarginalSummary),
}

fn resolve_input(input: &TableInput, echo: &mut InputEcho, allow_summary: bool) -> Result<Resolved, CliError> {
    let given = [input.table.is_some(), input.csv.is_some(), input.pe.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given != 1 {
        return Err(CliError::Usage(
            "give exactly one of --table, --csv with --spec, or --pe/--pd/--measure".into(),
        ));
    }
    echo.haldane = input.haldane;
    if let Some(t) = &input.table {
        let c = parse_table(t)?;
        echo.table = Some(c);
        return Ok(Resolved::Table(c));
    }
    if let Some(csv) = &input.csv {
        let spec_path = input
            .spec
            .as_ref()
            .ok_or_else(|| CliError::Usage("--csv needs --spec".into()))?;
        let spec = read_spec(spec_path)?;
        let tab = load_counts(open(csv)?, &spec)?;
        echo.csv = Some(csv.display().to_string());
        echo.spec = Some(spec_path.display().to_string());
        echo.excluded_rows = Some(tab.excluded);
        echo.table = Some(tab.counts);
        return Ok(Resolved::Table(tab.counts));
    }
    if !allow_summary {
        return Err(CliError::Usage("this command needs a count table (--table or --csv)".into()));
    }
    let (Some(pe), Some(pd), Some(m)) = (input.pe, input.pd, input.measure.as_ref()) else {
        return Err(CliError::Usage("--pe, --pd and --measure go together".into()));
    };
    let (kind, value) = parse_measure(m)?;
    echo.summary = Some(SummaryEcho {
        p_e: pe,
        p_d: pd,
        measure: kind,
        value,
    });
    Ok(Resolved::Summary(MarginalSummary::new(pe, pd, kind, value)?))
}

/// Threshold section plus the table prevalences `(P(e=1), P(d=1))`.
fn threshold_section(r: &Resolved, haldane: bool, warnings: &mut Vec<String>) -> Result<(ThresholdSection, f64, f64), CliError> {
    match r {
        Resolved::Table(c) => {
            let probs = if haldane {
                Some(c.haldane_probs()?)
            } else if c.has_zero_cell() {
                warnings.push("table has a zero cell; measures omitted (use --haldane to add 0.5 to every cell)".into());
                None
            } else {
                Some(c.probs()?)
            };
            let (phi, p_e, p_d) = match &probs {
                Some(p) => {
                    let t = threshold(p)?;
                    (t.phi_used, p.p_e(), p.p_d())
                }
                None => {
                    let n = c.total() as f64;
                    (c.phi()?, c.exposed() as f64 / n, c.cases() as f64 / n)
                }
            };
            Ok((
                ThresholdSection {
                    t: 1.0 - phi.abs(),
                    phi,
                    source: source_label(None),
                    measures: probs.as_ref().map(measures),
                },
                p_e,
                p_d,
            ))
        }
        Resolved::Summary(m) => {
            let t = threshold_from_measure(m)?;
            Ok((
                ThresholdSection {
                    t: t.t,
                    phi: t.phi_used,
                    source: source_label(Some(m.kind())),
                    measures: None,
                },
                m.p_e(),
                m.p_d(),
            ))
        }
    }
}

fn evidence(
    ev: &EvidenceArgs,
    table_pe: f64,
    table_pd: f64,
    default_source: &str,
    warnings: &mut Vec<String>,
) -> Result<Option<RandomnessSection>, CliError> {
    let trait_ev = |bc: &Option<String>, pc: &Option<String>, name: &str| -> Result<Option<(ConcordanceKind, f64)>, CliError> {
        match (bc, pc) {
            (Some(_), Some(_)) => Err(CliError::Usage(format!("give only one of --bc-{name} and --pc-{name}"))),
            (Some(v), None) => Ok(Some((ConcordanceKind::Probandwise, parse_concordance(v)?))),
            (None, Some(v)) => Ok(Some((ConcordanceKind::Pairwise, parse_concordance(v)?))),
            (None, None) => Ok(None),
        }
    };
    let e = trait_ev(&ev.bc_e, &ev.pc_e, "e")?;
    let d = trait_ev(&ev.bc_d, &ev.pc_d, "d")?;
    let (e, d) = match (e, d) {
        (Some(e), Some(d)) => (e, d),
        (None, None) => return Ok(None),
        _ => {
            warnings.push("concordance given for only one trait; randomness bound not computed".into());
            return Ok(None);
        }
    };
    let mut prevalence = |over: Option<f64>, table: f64, name: &str| -> (f64, String) {
        match over {
            Some(p) => {
                if (p - table).abs() > PREVALENCE_WARN {
                    warnings.push(format!(
                        "{name} prevalence override {p} differs from the table's {table:.4} by more than {PREVALENCE_WARN}"
                    ));
                }
                (p, "override".into())
            }
            None => (table, default_source.into()),
        }
    };
    let (pe, pe_src) = prevalence(ev.prev_e, table_pe, "exposure");
    let (pd, pd_src) = prevalence(ev.prev_d, table_pd, "outcome");
    let ee = ConcordanceEvidence::new(e.0, e.1, pe)?;
    let de = ConcordanceEvidence::new(d.0, d.1, pd)?;
    let bound = lower_bound_eta(&ee, &de)?;
    let echo = |c: &ConcordanceEvidence, src: String| EvidenceEcho {
        kind: c.kind,
        value: c.value,
        prevalence: c.prevalence,
        prevalence_source: src,
    };
    Ok(Some(RandomnessSection::new(bound, echo(&ee, pe_src), echo(&de, pd_src))))
}

fn resample_config(s: &SamplingArgs, report: &mut TestReport) -> Result<(ResampleConfig, bool), CliError> {
    let (seed, from_entropy) = match s.seed {
        Some(seed) => (seed, false),
        None => (rand::random::<u64>(), true),
    };
    if from_entropy {
        report.warnings.push(format!(
            "no --seed given; drew seed {seed} from system entropy (pass --seed {seed} to reproduce)"
        ));
    }
    let cfg = ResampleConfig::new(s.alpha, s.samples, seed)?;
    if cfg.under_sampled() {
        report.warnings.push(format!(
            "only {} synthetic samples; results with fewer than 1000 are not reportable",
            cfg.num_samples
        ));
    }
    Ok((cfg, from_entropy))
}

fn fpc_section(c: &Counts2x2, s: &SamplingArgs, report: &mut TestReport) -> Result<FpcSection, CliError> {
    let (cfg, seed_from_entropy) = resample_config(s, report)?;
    let result = fpc_threshold(c, &cfg)?;
    if result.degenerate_count > 0 {
        report.warnings.push(format!(
            "{} synthetic tables had a degenerate marginal and were skipped",
            result.degenerate_count
        ));
    }
    Ok(FpcSection {
        result,
        seed_from_entropy,
    })
}

pub(crate) fn cmd_threshold(input: &TableInput) -> Result<TestReport, CliError> {
    let mut echo = InputEcho::default();
    let r = resolve_input(input, &mut echo, true)?;
    let mut report = TestReport::new("threshold", echo);
    let (t, _, _) = threshold_section(&r, input.haldane, &mut report.warnings)?;
    report.threshold = Some(t);
    report.conclude();
    Ok(report)
}

pub(crate) fn cmd_test(a: &TestArgs) -> Result<TestReport, CliError> {
    let mut echo = InputEcho::default();
    let r = resolve_input(&a.input, &mut echo, true)?;
    let mut report = TestReport::new("test", echo);
    let (t, pe, pd) = threshold_section(&r, a.input.haldane, &mut report.warnings)?;
    report.threshold = Some(t);
    let source = if matches!(r, Resolved::Table(_)) { "table" } else { "summary" };
    report.randomness = evidence(&a.evidence, pe, pd, source, &mut report.warnings)?;
    if report.randomness.is_none() {
        report.warnings.push("no concordance evidence for both traits; verdict is indeterminate".into());
    }
    if a.fpc {
        let Resolved::Table(c) = &r else {
            return Err(CliError::Usage("--fpc needs a count table".into()));
        };
        report.finite_population = Some(fpc_section(c, &a.sampling, &mut report)?);
    }
    report.conclude();
    Ok(report)
}

pub(crate) fn cmd_fpc(a: &FpcArgs) -> Result<TestReport, CliError> {
    let mut echo = InputEcho::default();
    let r = resolve_input(&a.input, &mut echo, false)?;
    let Resolved::Table(c) = r else { unreachable!("summaries rejected above") };
    let mut report = TestReport::new("fpc", echo);
    let (t, _, _) = threshold_section(&r, a.input.haldane, &mut report.warnings)?;
    report.threshold = Some(t);
    report.finite_population = Some(fpc_section(&c, &a.sampling, &mut report)?);
    report.conclude();
    Ok(report)
}

fn parse_stratum(s: &str) -> Result<Stratum, CliError> {
    let (label, counts) = s
        .rsplit_once('=')
        .ok_or_else(|| CliError::Usage(format!("--stratum expects LABEL=x01,x11,x00,x10, got `{s}`")))?;
    Ok(Stratum {
        label: label.trim().to_string(),
        counts: parse_table(counts)?,
    })
}

fn parse_merge(items: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    items
        .iter()
        .map(|m| {
            m.split_once('=')
                .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("--merge expects OLD=NEW, got `{m}`")))
        })
        .collect()
}

pub(crate) fn cmd_adjust(a: &AdjustArgs) -> Result<TestReport, CliError> {
    let mut echo = InputEcho::default();
    let mut table = match (&a.stratum[..], &a.csv) {
        ([], Some(csv)) => {
            let spec_path = a.spec.as_ref().ok_or_else(|| CliError::Usage("--csv needs --spec".into()))?;
            let spec = read_spec(spec_path)?;
            let tab = load_stratified(open(csv)?, &spec)?;
            echo.csv = Some(csv.display().to_string());
            echo.spec = Some(spec_path.display().to_string());
            echo.excluded_rows = Some(tab.excluded);
            tab.table
        }
        ([_, ..], None) => StratifiedTable::new(a.stratum.iter().map(|s| parse_stratum(s)).collect::<Result<_, _>>()?)?,
        _ => return Err(CliError::Usage("give either --stratum (repeatable) or --csv with --spec".into())),
    };
    if !a.merge.is_empty() {
        table = table.merge(&parse_merge(&a.merge)?)?;
    }
    echo.strata = Some(
        table
            .strata()
            .iter()
            .map(|s| StratumEcho {
                label: s.label.clone(),
                counts: s.counts,
            })
            .collect(),
    );
    let marginal = table.marginal();
    echo.table = Some(marginal);
    let mut report = TestReport::new("adjust", echo);

    let phi = marginal.phi()?;
    let probs = marginal.probs().ok();
    report.threshold = Some(ThresholdSection {
        t: 1.0 - phi.abs(),
        phi,
        source: source_label(None),
        measures: probs.as_ref().map(measures),
    });
    let n = marginal.total() as f64;
    let (pe, pd) = (marginal.exposed() as f64 / n, marginal.cases() as f64 / n);
    report.randomness = evidence(&a.evidence, pe, pd, "table", &mut report.warnings)?;

    let problem = build_problem(&table)?;
    let sol = solve_tau(&problem, a.tol)?;
    let strata = problem
        .strata
        .iter()
        .zip(table.strata())
        .enumerate()
        .map(|(i, (b, s))| StratumDiagnostics {
            label: b.label.clone(),
            weight: b.weight,
            counts: s.counts,
            phi: b.phi,
            t: 1.0 - b.phi.abs(),
            var_e: b.var_e,
            var_d: b.var_d,
            l2_pi: b.l2_pi,
            u2_pi: b.u2_pi,
            l2_r: b.l2_r,
            u2_r: b.u2_r,
            pi_var: sol.pi_vars[i],
            r_var: sol.r_vars[i],
        })
        .collect();
    let l_eta = report.randomness.as_ref().map(|r| r.l_eta);
    let t_marginal = 1.0 - phi.abs();
    let ratio = |t: f64| l_eta.filter(|_| t > 0.0).map(|l| l / t);
    report.adjusted = Some(AdjustedSection {
        t_marginal,
        t_c: sol.t_c,
        tau: sol.tau,
        solver_gap: sol.solver_gap,
        tol: a.tol,
        method: sol.method,
        nodes: sol.nodes,
        between_e: problem.between_e,
        between_d: problem.between_d,
        adjusted_rr: adjusted_rr(&table)?,
        ample_ratio_marginal: ratio(t_marginal),
        ample_ratio_adjusted: ratio(sol.t_c),
        strata,
    });
    report.conclude();
    Ok(report)
}

pub(crate) fn cmd_verify(a: &VerifyArgs) -> Result<(VerifyReport, Option<u64>), CliError> {
    let (seed, drawn) = match a.seed {
        Some(s) => (s, None),
        None => {
            let s = rand::random::<u64>();
            (s, Some(s))
        }
    };
    let suite = run_suite(&SuiteConfig {
        seed,
        intensity: a.intensity,
        fault: a.inject_fault,
    });
    Ok((VerifyReport::new(suite), drawn))
}

pub(crate) fn cmd_ingest_check(a: &IngestArgs) -> Result<TestReport, CliError> {
    let spec = read_spec(&a.spec)?;
    let mut echo = InputEcho {
        csv: Some(a.csv.display().to_string()),
        spec: Some(a.spec.display().to_string()),
        ..InputEcho::default()
    };
    if spec.covariates.is_empty() {
        let tab = load_counts(open(&a.csv)?, &spec)?;
        echo.table = Some(tab.counts);
        echo.excluded_rows = Some(tab.excluded);
    } else {
        let tab = load_stratified(open(&a.csv)?, &spec)?;
        echo.table = Some(tab.table.marginal());
        echo.excluded_rows = Some(tab.excluded);
        echo.strata = Some(
            tab.table
                .strata()
                .iter()
                .map(|s| StratumEcho {
                    label: s.label.clone(),
                    counts: s.counts,
                })
                .collect(),
        );
    }
    let mut report = TestReport::new("ingest-check", echo);
    if let Some(c) = report.inputs.table {
        match threshold_section(&Resolved::Table(c), false, &mut report.warnings) {
            Ok((t, _, _)) => report.threshold = Some(t),
            Err(e) => report.warnings.push(format!("threshold not computed: {e}")),
        }
    }
    if report.inputs.excluded_rows.unwrap_or(0) > 0 {
        report.warnings.push(format!(
            "{} rows could not be mapped and were excluded",
            report.inputs.excluded_rows.unwrap_or(0)
        ));
    }
    report.conclude();
    Ok(report)
}
