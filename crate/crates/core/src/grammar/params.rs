use rand::Rng;

use super::mlp::ResidualMlp;
use super::rules::{RuleLogProbs, RuleVars};
use super::{GrammarSpec, ModelKind};
use crate::diffmath::{xavier_uniform, Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Parameter layout of the neural and compound parameterizations.
struct NeuralLayout {
    /// `w_S`, `[1, d]`.
    root_emb: ParamId,
    /// `w_A` for `A ∈ N`, `[|N|, d]`.
    nt_emb: ParamId,
    /// `w_T` for `T ∈ P`, `[|P|, d]`.
    pt_emb: ParamId,
    /// `u_A`, `[|N|, d]`, and `b_A`.
    root_out: ParamId,
    root_bias: ParamId,
    /// `u_BC`, `[(|N|+|P|)², d + z]`, and `b_BC`.
    rule_out: ParamId,
    rule_bias: ParamId,
    /// `u_w`, `[|Σ|, d]`, and `b_w`.
    term_out: ParamId,
    term_bias: ParamId,
    f1: ResidualMlp,
    f2: ResidualMlp,
}

struct ScalarLayout {
    root_logits: ParamId,
    rule_logits: ParamId,
    term_logits: ParamId,
}

enum Layout {
    Scalar(ScalarLayout),
    Neural(NeuralLayout),
}

/// Maps parameters held in a [`ParamStore`] to rule log-probabilities.
///
/// All grammar parameters are stored under the `grammar.` prefix so that a
/// single store can also hold the inference network.
pub struct GrammarModel {
    spec: GrammarSpec,
    kind: ModelKind,
    layout: Layout,
}

const PREFIX: &str = "grammar";

fn name(field: &str) -> String {
    format!("{PREFIX}.{field}")
}

impl GrammarModel {
    /// Creates freshly initialized parameters in `store`. Matrices use Xavier
    /// uniform initialization and biases start at zero.
    pub fn register(
        spec: GrammarSpec,
        kind: ModelKind,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        spec.validate()?;
        check_kind(&spec, kind)?;
        let (n, p, v, d, z) = (
            spec.num_nonterminals,
            spec.num_preterminals,
            spec.vocab_size,
            spec.symbol_dim,
            spec.z_dim,
        );
        let layout = match kind {
            ModelKind::Scalar => Layout::Scalar(ScalarLayout {
                root_logits: store.insert(name("root_logits"), xavier_uniform(&[n], rng)?),
                rule_logits: store.insert(name("rule_logits"), xavier_uniform(&[n, spec.num_child_pairs()], rng)?),
                term_logits: store.insert(name("term_logits"), xavier_uniform(&[p, v], rng)?),
            }),
            ModelKind::Neural | ModelKind::Compound => Layout::Neural(NeuralLayout {
                root_emb: store.insert(name("root_emb"), xavier_uniform(&[1, d], rng)?),
                nt_emb: store.insert(name("nt_emb"), xavier_uniform(&[n, d], rng)?),
                pt_emb: store.insert(name("pt_emb"), xavier_uniform(&[p, d], rng)?),
                root_out: store.insert(name("root_out"), xavier_uniform(&[n, d], rng)?),
                root_bias: store.insert(name("root_bias"), Tensor::zeros(&[n])),
                rule_out: store.insert(name("rule_out"), xavier_uniform(&[spec.num_child_pairs(), d + z], rng)?),
                rule_bias: store.insert(name("rule_bias"), Tensor::zeros(&[spec.num_child_pairs()])),
                term_out: store.insert(name("term_out"), xavier_uniform(&[v, d], rng)?),
                term_bias: store.insert(name("term_bias"), Tensor::zeros(&[v])),
                f1: ResidualMlp::register(store, &name("f1"), d + z, d, rng)?,
                f2: ResidualMlp::register(store, &name("f2"), d + z, d, rng)?,
            }),
        };
        Ok(GrammarModel { spec, kind, layout })
    }

    /// Looks up an existing parameter layout (e.g. from a checkpoint) and
    /// checks every shape against `spec`.
    pub fn attach(spec: GrammarSpec, kind: ModelKind, store: &ParamStore) -> Result<Self> {
        spec.validate()?;
        check_kind(&spec, kind)?;
        let (n, p, v, d, z) = (
            spec.num_nonterminals,
            spec.num_preterminals,
            spec.vocab_size,
            spec.symbol_dim,
            spec.z_dim,
        );
        let ss = spec.num_child_pairs();
        let get = |field: &str, shape: &[usize]| -> Result<ParamId> {
            let id = store.require(&name(field))?;
            if store.get(id).shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "{}: expected shape {shape:?}, found {:?}",
                    name(field),
                    store.get(id).shape()
                )));
            }
            Ok(id)
        };
        let layout = match kind {
            ModelKind::Scalar => Layout::Scalar(ScalarLayout {
                root_logits: get("root_logits", &[n])?,
                rule_logits: get("rule_logits", &[n, ss])?,
                term_logits: get("term_logits", &[p, v])?,
            }),
            ModelKind::Neural | ModelKind::Compound => {
                let f1 = ResidualMlp::attach(store, &name("f1"))?;
                let f2 = ResidualMlp::attach(store, &name("f2"))?;
                for (mlp, which) in [(&f1, "f1"), (&f2, "f2")] {
                    if mlp.input_dim() != d + z || mlp.width() != d {
                        return Err(Error::Checkpoint(format!(
                            "{which}: expected {} -> {d}, found {} -> {}",
                            d + z,
                            mlp.input_dim(),
                            mlp.width()
                        )));
                    }
                }
                Layout::Neural(NeuralLayout {
                    root_emb: get("root_emb", &[1, d])?,
                    nt_emb: get("nt_emb", &[n, d])?,
                    pt_emb: get("pt_emb", &[p, d])?,
                    root_out: get("root_out", &[n, d])?,
                    root_bias: get("root_bias", &[n])?,
                    rule_out: get("rule_out", &[ss, d + z])?,
                    rule_bias: get("rule_bias", &[ss])?,
                    term_out: get("term_out", &[v, d])?,
                    term_bias: get("term_bias", &[v])?,
                    f1,
                    f2,
                })
            }
        };
        Ok(GrammarModel { spec, kind, layout })
    }

    pub fn spec(&self) -> &GrammarSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// The root and terminal MLPs (`f1`, `f2`); `None` for the scalar model.
    pub fn mlps(&self) -> Option<(&ResidualMlp, &ResidualMlp)> {
        match &self.layout {
            Layout::Neural(l) => Some((&l.f1, &l.f2)),
            Layout::Scalar(_) => None,
        }
    }

    /// Records the rule log-probability computation on `tape`.
    ///
    /// `z` must be given exactly when the model is compound; it may be a
    /// vector of length `z_dim` or a `[1, z_dim]` row.
    pub fn rule_vars(&self, tape: &mut Tape, bound: &Bound, z: Option<Var>) -> Result<RuleVars> {
        let spec = &self.spec;
        let (n, p) = (spec.num_nonterminals, spec.num_preterminals);
        let (root, binary, terminal) = match (&self.layout, z) {
            (Layout::Scalar(l), None) => {
                let root = tape.log_softmax(bound[l.root_logits]);
                let binary = tape.log_softmax(bound[l.rule_logits]);
                let terminal = tape.log_softmax(bound[l.term_logits]);
                (root, binary, terminal)
            }
            (Layout::Neural(l), z) => {
                if (self.kind == ModelKind::Compound) != z.is_some() {
                    return Err(Error::ModelKind(format!(
                        "{} model {} a latent vector",
                        self.kind,
                        if z.is_some() { "does not take" } else { "requires" }
                    )));
                }
                let z_row = match z {
                    Some(z) => {
                        let len = tape.value(z).len();
                        if len != spec.z_dim {
                            return Err(Error::shape("compound_rule_logprobs", &[spec.z_dim], &[len]));
                        }
                        Some(tape.reshape(z, &[1, len])?)
                    }
                    None => None,
                };
                let with_z = |tape: &mut Tape, x: Var, rows: usize| -> Result<Var> {
                    match z_row {
                        Some(zr) => {
                            let zs = if rows == 1 { zr } else { tape.repeat_rows(zr, rows)? };
                            tape.concat_cols(x, zs)
                        }
                        None => Ok(x),
                    }
                };

                let root_in = with_z(tape, bound[l.root_emb], 1)?;
                let h = l.f1.forward(tape, bound, root_in)?;
                let scores = tape.linear(h, bound[l.root_out], Some(bound[l.root_bias]))?;
                let root = tape.log_softmax(scores);
                let root = tape.reshape(root, &[n])?;

                let nt_in = with_z(tape, bound[l.nt_emb], n)?;
                let scores = tape.linear(nt_in, bound[l.rule_out], Some(bound[l.rule_bias]))?;
                let binary = tape.log_softmax(scores);

                let pt_in = with_z(tape, bound[l.pt_emb], p)?;
                let h = l.f2.forward(tape, bound, pt_in)?;
                let scores = tape.linear(h, bound[l.term_out], Some(bound[l.term_bias]))?;
                let terminal = tape.log_softmax(scores);
                (root, binary, terminal)
            }
            (Layout::Scalar(_), Some(_)) => {
                return Err(Error::ModelKind("scalar model does not take a latent vector".into()))
            }
        };
        Ok(RuleVars {
            root,
            binary,
            terminal,
            num_nonterminals: n,
            num_preterminals: p,
            vocab_size: spec.vocab_size,
        })
    }

    /// Forward-only evaluation of the rule tables.
    pub fn rule_logprobs(&self, store: &ParamStore, z: Option<&[f64]>) -> Result<RuleLogProbs> {
        store.check_finite()?;
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let z = z.map(|z| tape.constant(Tensor::vector(z.to_vec())));
        let vars = self.rule_vars(&mut tape, &bound, z)?;
        Ok(vars.values(&tape))
    }
}

fn check_kind(spec: &GrammarSpec, kind: ModelKind) -> Result<()> {
    match (kind, spec.z_dim) {
        (ModelKind::Compound, 0) => Err(Error::Config("compound model needs z_dim > 0".into())),
        (ModelKind::Scalar | ModelKind::Neural, z) if z > 0 => {
            Err(Error::Config(format!("{kind} model must have z_dim = 0, got {z}")))
        }
        _ => Ok(()),
    }
}

/// Rule log-probabilities of a neural PCFG.
pub fn neural_rule_logprobs(model: &GrammarModel, store: &ParamStore) -> Result<RuleLogProbs> {
    if model.kind != ModelKind::Neural {
        return Err(Error::ModelKind(format!("expected a neural model, got {}", model.kind)));
    }
    model.rule_logprobs(store, None)
}

/// Rule log-probabilities of a compound PCFG conditioned on the latent `z`.
pub fn compound_rule_logprobs(model: &GrammarModel, store: &ParamStore, z: &[f64]) -> Result<RuleLogProbs> {
    if model.kind != ModelKind::Compound {
        return Err(Error::ModelKind(format!("expected a compound model, got {}", model.kind)));
    }
    if z.len() != model.spec.z_dim {
        return Err(Error::shape("compound_rule_logprobs", &[model.spec.z_dim], &[z.len()]));
    }
    model.rule_logprobs(store, Some(z))
}

/// Directly parameterized PCFG: each row of raw scores is normalized with a
/// log-softmax.
pub fn scalar_rule_logprobs(
    spec: &GrammarSpec,
    root_scores: &[f64],
    binary_scores: &[f64],
    terminal_scores: &[f64],
) -> Result<RuleLogProbs> {
    let (n, p, v) = (spec.num_nonterminals, spec.num_preterminals, spec.vocab_size);
    let ss = spec.num_child_pairs();
    let mut tape = Tape::new();
    let root = tape.leaf(Tensor::new(vec![n], root_scores.to_vec())?);
    let binary = tape.leaf(Tensor::new(vec![n, ss], binary_scores.to_vec())?);
    let terminal = tape.leaf(Tensor::new(vec![p, v], terminal_scores.to_vec())?);
    for (what, t) in [("root scores", root), ("binary scores", binary), ("terminal scores", terminal)] {
        if let Some(index) = tape.value(t).first_non_finite() {
            return Err(Error::NonFinite { what, index });
        }
    }
    let vars = RuleVars {
        root: tape.log_softmax(root),
        binary: tape.log_softmax(binary),
        terminal: tape.log_softmax(terminal),
        num_nonterminals: n,
        num_preterminals: p,
        vocab_size: v,
    };
    Ok(vars.values(&tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::seeded_rng;

    fn model(kind: ModelKind, spec: GrammarSpec, seed: u64) -> (GrammarModel, ParamStore) {
        let mut store = ParamStore::new();
        let m = GrammarModel::register(spec, kind, &mut store, &mut seeded_rng(seed)).unwrap();
        (m, store)
    }

    fn small() -> GrammarSpec {
        GrammarSpec::new(3, 4, 7).with_symbol_dim(5)
    }

    #[test]
    fn neural_rows_are_normalized() {
        let (m, store) = model(ModelKind::Neural, small(), 1);
        let rules = neural_rule_logprobs(&m, &store).unwrap();
        assert!(rules.max_normalization_error() < 1e-8);
        assert!(rules.all_finite());
    }

    #[test]
    fn equal_scores_give_uniform_rows() {
        let (m, mut store) = model(ModelKind::Neural, small(), 2);
        for id in [
            "grammar.root_out",
            "grammar.rule_out",
            "grammar.term_out",
        ] {
            let id = store.id(id).unwrap();
            store.get_mut(id).data_mut().fill(0.0);
        }
        let rules = neural_rule_logprobs(&m, &store).unwrap();
        let n = 3.0f64;
        for a in 0..3 {
            assert!((rules.root(a) + n.ln()).abs() < 1e-15);
        }
        assert!(rules.binary_table().iter().all(|&x| (x + 49f64.ln()).abs() < 1e-12));
        assert!(rules.terminal_table().iter().all(|&x| (x + 7f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn binary_bias_dominates() {
        // |N| = |P| = |Σ| = 1; child pairs are (A A), (A T), (T A), (T T).
        let spec = GrammarSpec::new(1, 1, 1).with_symbol_dim(4);
        let (m, mut store) = model(ModelKind::Neural, spec, 3);
        let out = store.id("grammar.rule_out").unwrap();
        store.get_mut(out).data_mut().fill(0.0);
        let bias = store.id("grammar.rule_bias").unwrap();
        store.get_mut(bias).data_mut().copy_from_slice(&[0.0, 0.0, 0.0, 20.0]);
        let rules = neural_rule_logprobs(&m, &store).unwrap();
        // π = e^20 / (e^20 + 3), so 1 - π = 3 / (e^20 + 3) ≈ 6.18e-9.
        let p = rules.binary(0, 1, 1).exp();
        assert!(p >= 1.0 - 6.2e-9, "{p}");
        let expected = 1.0 / (1.0 + 3.0 * (-20f64).exp());
        assert!((p - expected).abs() < 1e-14);
    }

    #[test]
    fn full_size_table_shapes() {
        let spec = GrammarSpec::new(30, 60, 10_000).with_symbol_dim(8);
        let (m, store) = model(ModelKind::Neural, spec, 4);
        let rules = neural_rule_logprobs(&m, &store).unwrap();
        assert_eq!(rules.root_table().len(), 30);
        assert_eq!(rules.binary_table().len(), 30 * 8100);
        assert_eq!(rules.terminal_table().len(), 60 * 10_000);
    }

    #[test]
    fn non_finite_parameter_is_rejected() {
        let (m, mut store) = model(ModelKind::Neural, small(), 5);
        let id = store.id("grammar.nt_emb").unwrap();
        store.get_mut(id).data_mut()[2] = f64::NAN;
        assert!(matches!(
            neural_rule_logprobs(&m, &store),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn compound_is_pure_and_depends_on_z() {
        let spec = small().with_z_dim(2);
        let (m, store) = model(ModelKind::Compound, spec, 6);
        let a = compound_rule_logprobs(&m, &store, &[0.3, -1.0]).unwrap();
        let a2 = compound_rule_logprobs(&m, &store, &[0.3, -1.0]).unwrap();
        assert_eq!(a, a2);
        let b = compound_rule_logprobs(&m, &store, &[1.5, 0.2]).unwrap();
        let max_diff = a
            .binary_table()
            .iter()
            .zip(b.binary_table())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 1e-12);
        assert!(matches!(
            compound_rule_logprobs(&m, &store, &[1.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn compound_at_zero_latent_matches_manual_concatenation() {
        // With z = 0, the binary scores reduce to u_BC[:, :d] · w_A + b_BC.
        let spec = small().with_z_dim(3);
        let (m, store) = model(ModelKind::Compound, spec, 7);
        let rules = compound_rule_logprobs(&m, &store, &[0.0; 3]).unwrap();
        let w_a = store.get(store.id("grammar.nt_emb").unwrap());
        let u = store.get(store.id("grammar.rule_out").unwrap());
        let b = store.get(store.id("grammar.rule_bias").unwrap());
        let d = 5;
        for a in 0..3 {
            let scores: Vec<f64> = (0..49)
                .map(|bc| {
                    let urow = &u.row(bc)[..d];
                    urow.iter().zip(w_a.row(a)).map(|(x, y)| x * y).sum::<f64>() + b.data()[bc]
                })
                .collect();
            let lse = crate::diffmath::logsumexp(&scores);
            for (bc, s) in scores.iter().enumerate() {
                assert!((rules.binary_row(a)[bc] - (s - lse)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn scalar_parameterization() {
        let spec = GrammarSpec::new(2, 1, 3);
        let rules = scalar_rule_logprobs(&spec, &[0.0; 2], &[0.0; 18], &[0.0; 3]).unwrap();
        assert!(rules.root_table().iter().all(|&x| (x + 2f64.ln()).abs() < 1e-15));
        let mut term = [0.0; 3];
        term[1] = 30.0;
        let rules = scalar_rule_logprobs(&spec, &[0.0; 2], &[0.0; 18], &term).unwrap();
        assert!(rules.terminal(0, 1).exp() > 1.0 - 1e-12);
        assert!(matches!(
            scalar_rule_logprobs(&spec, &[0.0; 3], &[0.0; 18], &term),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn scalar_matches_bypassed_neural_network() {
        // Neural model with all output embeddings zeroed has scores equal to its
        // biases; feeding those biases to the scalar parameterization must agree.
        let spec = small();
        let (m, mut store) = model(ModelKind::Neural, spec, 8);
        let mut rng = seeded_rng(80);
        for (out, bias) in [
            ("grammar.root_out", "grammar.root_bias"),
            ("grammar.rule_out", "grammar.rule_bias"),
            ("grammar.term_out", "grammar.term_bias"),
        ] {
            let id = store.id(out).unwrap();
            store.get_mut(id).data_mut().fill(0.0);
            let id = store.id(bias).unwrap();
            for x in store.get_mut(id).data_mut() {
                *x = rng.random_range(-2.0..2.0);
            }
        }
        let neural = neural_rule_logprobs(&m, &store).unwrap();
        let bias = |n: &str| store.get(store.id(n).unwrap()).data().to_vec();
        let rows = |v: Vec<f64>, r: usize| v.repeat(r);
        let scalar = scalar_rule_logprobs(
            &spec,
            &bias("grammar.root_bias"),
            &rows(bias("grammar.rule_bias"), 3),
            &rows(bias("grammar.term_bias"), 4),
        )
        .unwrap();
        for (x, y) in neural
            .binary_table()
            .iter()
            .chain(neural.root_table())
            .chain(neural.terminal_table())
            .zip(scalar.binary_table().iter().chain(scalar.root_table()).chain(scalar.terminal_table()))
        {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn attach_round_trips_layout() {
        let spec = small().with_z_dim(2);
        let (m, store) = model(ModelKind::Compound, spec, 9);
        let again = GrammarModel::attach(spec, ModelKind::Compound, &store).unwrap();
        let z = [0.1, 0.2];
        assert_eq!(
            m.rule_logprobs(&store, Some(&z)).unwrap(),
            again.rule_logprobs(&store, Some(&z)).unwrap()
        );
        assert!(GrammarModel::attach(small(), ModelKind::Neural, &store).is_err());
    }

    #[test]
    fn kind_and_z_dim_must_agree() {
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(0);
        assert!(GrammarModel::register(small(), ModelKind::Compound, &mut store, &mut rng).is_err());
        assert!(GrammarModel::register(small().with_z_dim(2), ModelKind::Neural, &mut store, &mut rng).is_err());
    }
}
