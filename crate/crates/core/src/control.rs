//! Control trees: the runtime instruction that selects the algorithmic
//! variant, block size, parallelism and kernel parameters at every level of
//! a recursive algorithm.
//!
//! Trees are read from and written to JSON:
//!
//! ```json
//! {"op": "cholesky", "variant": 3, "bs": 128, "ways": 2,
//!  "kernel": {"kc": 128},
//!  "child": {"op": "cholesky", "variant": "unblocked3"}}
//! ```
//!
//! Cholesky has three blocked (`1`, `2`, `3`) and three unblocked
//! (`"unblocked1"`..`"unblocked3"`) variants; `lu`, `qr` and `ltlt` use
//! `"blocked"` / `"unblocked"`; `gemm` nodes are always `"blocked"` and tune
//! the engine through `kernel`. A blocked node without a child recurses into
//! the op's default unblocked leaf.

use std::fmt;
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::engine::KernelConfig;
use crate::scalar::DType;

pub const MAX_DEPTH: usize = 16;
pub const MAX_WAYS: usize = 256;
const DEFAULT_BS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Cholesky,
    Lu,
    Qr,
    Ltlt,
    Gemm,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [OpKind::Cholesky, OpKind::Lu, OpKind::Qr, OpKind::Ltlt, OpKind::Gemm];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Cholesky => "cholesky",
            OpKind::Lu => "lu",
            OpKind::Qr => "qr",
            OpKind::Ltlt => "ltlt",
            OpKind::Gemm => "gemm",
        }
    }

    /// Number of numbered variants in each family (blocked and unblocked).
    pub fn variant_count(self) -> u8 {
        match self {
            OpKind::Cholesky => 3,
            _ => 1,
        }
    }

    fn default_leaf(self) -> Variant {
        match self {
            OpKind::Cholesky => Variant::Unblocked(3),
            OpKind::Gemm => Variant::Blocked(1),
            _ => Variant::Unblocked(1),
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        OpKind::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown op `{s}` (expected cholesky, lu, qr, ltlt or gemm)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Blocked(u8),
    Unblocked(u8),
}

impl Variant {
    pub fn is_blocked(self) -> bool {
        matches!(self, Variant::Blocked(_))
    }

    pub fn number(self) -> u8 {
        match self {
            Variant::Blocked(v) | Variant::Unblocked(v) => v,
        }
    }
}

/// Per-node overrides of the engine's blocking parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KernelOverrides {
    pub mr: Option<usize>,
    pub nr: Option<usize>,
    pub mc: Option<usize>,
    pub kc: Option<usize>,
    pub nc: Option<usize>,
}

impl KernelOverrides {
    pub fn apply(&self, mut cfg: KernelConfig) -> KernelConfig {
        cfg.mr = self.mr.unwrap_or(cfg.mr);
        cfg.nr = self.nr.unwrap_or(cfg.nr);
        cfg.mc = self.mc.unwrap_or(cfg.mc);
        cfg.kc = self.kc.unwrap_or(cfg.kc);
        cfg.nc = self.nc.unwrap_or(cfg.nc);
        cfg
    }

    fn fields(&self) -> [(&'static str, Option<usize>); 5] {
        [
            ("mr", self.mr),
            ("nr", self.nr),
            ("mc", self.mc),
            ("kc", self.kc),
            ("nc", self.nc),
        ]
    }
}

/// One level of a control tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ControlNode {
    pub op: OpKind,
    pub variant: Variant,
    pub bs: Option<usize>,
    pub ways: usize,
    pub kernel: Option<KernelOverrides>,
    pub child: Option<Box<ControlNode>>,
}

impl ControlNode {
    pub fn unblocked(op: OpKind, variant: u8) -> Self {
        Self {
            op,
            variant: Variant::Unblocked(variant),
            bs: None,
            ways: 1,
            kernel: None,
            child: None,
        }
    }

    pub fn blocked(op: OpKind, variant: u8, bs: usize, child: Option<ControlNode>) -> Self {
        Self {
            op,
            variant: Variant::Blocked(variant),
            bs: Some(bs),
            ways: 1,
            kernel: None,
            child: child.map(Box::new),
        }
    }

    /// A bare engine node for `gemm`.
    pub fn gemm(kernel: Option<KernelOverrides>) -> Self {
        Self {
            op: OpKind::Gemm,
            variant: Variant::Blocked(1),
            bs: None,
            ways: 1,
            kernel,
            child: None,
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.child.as_ref().map_or(0, |c| c.depth())
    }

    /// The sub-problem's tree; blocked nodes without a child fall back to
    /// the op's default unblocked leaf.
    pub fn child_or_leaf(&self) -> ControlNode {
        match &self.child {
            Some(c) => (**c).clone(),
            None => {
                let mut leaf = ControlNode::unblocked(self.op, self.op.default_leaf().number());
                leaf.ways = self.ways;
                leaf
            }
        }
    }

    /// Engine configuration for level-3 calls issued at this node, given the
    /// configuration inherited from the parent.
    pub fn kernel_config(&self, inherited: KernelConfig) -> KernelConfig {
        match &self.kernel {
            Some(k) => k.apply(inherited),
            None => inherited,
        }
    }

    /// Sets `ways` on every level.
    pub fn with_ways(mut self, ways: usize) -> Self {
        self.ways = ways;
        self.child = self.child.map(|c| Box::new(c.with_ways(ways)));
        self
    }

    /// Compact single-line description of the levels, e.g. `v3:128>u3`.
    pub fn descriptor(&self) -> String {
        let mut parts = vec![];
        let mut node = Some(self);
        while let Some(n) = node {
            let multi = n.op.variant_count() > 1;
            let mut s = match (n.op, n.variant) {
                (OpKind::Gemm, _) => "gemm".to_string(),
                (_, Variant::Blocked(v)) if multi => format!("v{v}:{}", n.bs.unwrap_or(0)),
                (_, Variant::Blocked(_)) => format!("blk:{}", n.bs.unwrap_or(0)),
                (_, Variant::Unblocked(v)) if multi => format!("u{v}"),
                (_, Variant::Unblocked(_)) => "unb".to_string(),
            };
            if let Some(k) = &n.kernel {
                let kv: Vec<String> = k
                    .fields()
                    .iter()
                    .filter_map(|(name, v)| v.map(|v| format!("{name}={v}")))
                    .collect();
                s.push_str(&format!("[{}]", kv.join(";")));
            }
            parts.push(s);
            node = n.child.as_deref();
        }
        parts.join(">")
    }

    pub fn to_json_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("op".into(), Value::from(self.op.name()));
        let variant = match (self.op.variant_count() > 1, self.variant) {
            (true, Variant::Blocked(v)) => Value::from(v),
            (true, Variant::Unblocked(v)) => Value::from(format!("unblocked{v}")),
            (false, Variant::Blocked(_)) => Value::from("blocked"),
            (false, Variant::Unblocked(_)) => Value::from("unblocked"),
        };
        obj.insert("variant".into(), variant);
        if let Some(bs) = self.bs {
            obj.insert("bs".into(), Value::from(bs));
        }
        if self.ways != 1 {
            obj.insert("ways".into(), Value::from(self.ways));
        }
        if let Some(k) = &self.kernel {
            let mut ko = Map::new();
            for (name, v) in k.fields() {
                if let Some(v) = v {
                    ko.insert(name.into(), Value::from(v));
                }
            }
            obj.insert("kernel".into(), Value::Object(ko));
        }
        if let Some(c) = &self.child {
            obj.insert("child".into(), c.to_json_value());
        }
        Value::Object(obj)
    }

    pub fn to_json(&self) -> String {
        self.to_json_value().to_string()
    }
}

/// A constraint violation located by a dotted path into the tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("invalid control tree: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("cannot enumerate trees: {0}")]
    Enumerate(String),
}

fn schema(path: &str, reason: impl Into<String>) -> ControlError {
    ControlError::Schema {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn join(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

/// Parses a control-tree JSON document.
pub fn parse_tree(text: &str) -> Result<ControlNode, ControlError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ControlError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let node = node_from_value(&value, "", 1)?;
    let v = structural_violations(&node);
    if let Some(first) = v.into_iter().next() {
        return Err(ControlError::Schema {
            path: first.path,
            reason: first.reason,
        });
    }
    Ok(node)
}

fn positive_int(v: &Value, path: &str) -> Result<usize, ControlError> {
    match v.as_u64() {
        Some(x) if x >= 1 => Ok(x as usize),
        _ => Err(schema(path, format!("expected an integer >= 1, got {v}"))),
    }
}

fn node_from_value(v: &Value, path: &str, depth: usize) -> Result<ControlNode, ControlError> {
    let obj = v
        .as_object()
        .ok_or_else(|| schema(if path.is_empty() { "<root>" } else { path }, "expected an object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "op" | "variant" | "bs" | "ways" | "kernel" | "child") {
            return Err(schema(&join(path, key), "unknown field"));
        }
    }
    let op_path = join(path, "op");
    let op: OpKind = obj
        .get("op")
        .ok_or_else(|| schema(&op_path, "missing required field"))?
        .as_str()
        .ok_or_else(|| schema(&op_path, "expected a string"))?
        .parse()
        .map_err(|e: String| schema(&op_path, e))?;

    let var_path = join(path, "variant");
    let raw = obj
        .get("variant")
        .ok_or_else(|| schema(&var_path, "missing required field"))?;
    let variant = parse_variant(op, raw).map_err(|r| schema(&var_path, r))?;

    let bs = obj.get("bs").map(|b| positive_int(b, &join(path, "bs"))).transpose()?;
    let ways = obj
        .get("ways")
        .map(|w| positive_int(w, &join(path, "ways")))
        .transpose()?
        .unwrap_or(1);

    let kernel = match obj.get("kernel") {
        None => None,
        Some(k) => {
            let kpath = join(path, "kernel");
            let ko = k.as_object().ok_or_else(|| schema(&kpath, "expected an object"))?;
            let mut ov = KernelOverrides::default();
            for (key, val) in ko {
                let fpath = join(&kpath, key);
                let slot = match key.as_str() {
                    "mr" => &mut ov.mr,
                    "nr" => &mut ov.nr,
                    "mc" => &mut ov.mc,
                    "kc" => &mut ov.kc,
                    "nc" => &mut ov.nc,
                    _ => return Err(schema(&fpath, "unknown field")),
                };
                *slot = Some(positive_int(val, &fpath)?);
            }
            Some(ov)
        }
    };

    let child = match obj.get("child") {
        None => None,
        Some(c) => {
            if depth >= MAX_DEPTH {
                return Err(schema(&join(path, "child"), format!("tree deeper than {MAX_DEPTH} levels")));
            }
            Some(Box::new(node_from_value(c, &join(path, "child"), depth + 1)?))
        }
    };

    Ok(ControlNode {
        op,
        variant,
        bs,
        ways,
        kernel,
        child,
    })
}

fn parse_variant(op: OpKind, v: &Value) -> Result<Variant, String> {
    let count = op.variant_count();
    if count > 1 {
        if let Some(x) = v.as_u64() {
            return if (1..=count as u64).contains(&x) {
                Ok(Variant::Blocked(x as u8))
            } else {
                Err(format!("blocked variant must be 1..{count}, got {x}"))
            };
        }
        if let Some(s) = v.as_str() {
            if let Some(num) = s.strip_prefix("unblocked") {
                if let Ok(x) = num.parse::<u8>() {
                    if (1..=count).contains(&x) {
                        return Ok(Variant::Unblocked(x));
                    }
                }
            }
        }
        Err(format!("expected 1..{count} or \"unblocked1\"..\"unblocked{count}\", got {v}"))
    } else {
        match v.as_str() {
            Some("blocked") => Ok(Variant::Blocked(1)),
            Some("unblocked") if op != OpKind::Gemm => Ok(Variant::Unblocked(1)),
            _ if op == OpKind::Gemm => Err(format!("gemm nodes take \"blocked\", got {v}")),
            _ => Err(format!("expected \"blocked\" or \"unblocked\", got {v}")),
        }
    }
}

/// Op-independent invariants of a single tree.
fn structural_violations(root: &ControlNode) -> Vec<Violation> {
    let mut out = vec![];
    if root.depth() > MAX_DEPTH {
        out.push(Violation {
            path: "<root>".into(),
            reason: format!("tree depth {} exceeds {MAX_DEPTH}", root.depth()),
        });
    }
    let mut path = String::new();
    let mut node = Some(root);
    let mut parent: Option<&ControlNode> = None;
    let mut inherited = KernelConfig::default_for(DType::F64);
    while let Some(n) = node {
        let mut bad = |field: &str, reason: String| {
            out.push(Violation {
                path: join(&path, field),
                reason,
            })
        };
        if let Some(p) = parent {
            if p.op != n.op {
                bad("op", format!("child op `{}` incompatible with parent op `{}`", n.op, p.op));
            }
        }
        let count = n.op.variant_count();
        if n.variant.number() == 0 || n.variant.number() > count {
            bad("variant", format!("variant {} out of range 1..{count}", n.variant.number()));
        }
        match (n.op, n.variant) {
            (OpKind::Gemm, Variant::Unblocked(_)) => bad("variant", "gemm nodes are always blocked".into()),
            (OpKind::Gemm, _) => {
                if n.bs.is_some() {
                    bad("bs", "gemm nodes take block sizes through `kernel`".into());
                }
                if n.child.is_some() {
                    bad("child", "gemm nodes have no child".into());
                }
            }
            (_, Variant::Blocked(_)) => {
                if n.bs.is_none() {
                    bad("bs", "blocked node requires bs".into());
                }
                if n.op == OpKind::Ltlt {
                    if let Some(c) = &n.child {
                        if c.variant.is_blocked() {
                            bad("child.variant", "ltlt panels are factored unblocked".into());
                        }
                    }
                }
            }
            (_, Variant::Unblocked(_)) => {
                if n.bs.is_some() {
                    bad("bs", "bs on unblocked node".into());
                }
                if n.child.is_some() {
                    bad("child", "unblocked node cannot have a child".into());
                }
            }
        }
        if n.bs == Some(0) {
            bad("bs", "bs must be >= 1".into());
        }
        if n.ways == 0 || n.ways > MAX_WAYS {
            bad("ways", format!("ways must be in 1..={MAX_WAYS}"));
        }
        inherited = n.kernel_config(inherited);
        if let Err(e) = inherited.validate() {
            bad("kernel", e.to_string());
        }
        parent = Some(n);
        node = n.child.as_deref();
        path = join(&path, "child");
    }
    out
}

/// The problem a tree is meant to drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Problem {
    pub op: OpKind,
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl Problem {
    pub fn square(op: OpKind, n: usize) -> Self {
        Self { op, m: n, n, k: n }
    }
}

/// Checks a tree against its invariants and a concrete problem. Block sizes
/// larger than the problem are allowed and give a single step.
pub fn validate(node: &ControlNode, problem: &Problem) -> Result<(), Vec<Violation>> {
    let mut out = structural_violations(node);
    if node.op != problem.op {
        out.push(Violation {
            path: "op".into(),
            reason: format!("tree is for `{}`, problem is `{}`", node.op, problem.op),
        });
    }
    if problem.op == OpKind::Qr && problem.m < problem.n {
        out.push(Violation {
            path: "<problem>".into(),
            reason: format!("qr needs m >= n, got {}x{}", problem.m, problem.n),
        });
    }
    if matches!(problem.op, OpKind::Cholesky | OpKind::Ltlt) && problem.m != problem.n {
        out.push(Violation {
            path: "<problem>".into(),
            reason: format!("{} needs a square matrix, got {}x{}", problem.op, problem.m, problem.n),
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Two-level default: blocked (right-looking for Cholesky) with bs=128 over
/// the unblocked leaf; a lone leaf when `n <= 128`.
pub fn default_tree(op: OpKind, n: usize, _dtype: DType) -> ControlNode {
    if op == OpKind::Gemm {
        return ControlNode::gemm(None);
    }
    let leaf = ControlNode::unblocked(op, op.default_leaf().number());
    if n <= DEFAULT_BS {
        leaf
    } else {
        let v = if op == OpKind::Cholesky { 3 } else { 1 };
        ControlNode::blocked(op, v, DEFAULT_BS, Some(leaf))
    }
}

/// All trees with `depth` blocked levels drawn from `variants x block_sizes`,
/// terminated by every unblocked leaf variant. For `gemm`, `block_sizes`
/// are `kc` overrides on a single engine node.
pub fn enumerate_trees(
    op: OpKind,
    variants: &[u8],
    block_sizes: &[usize],
    depth: usize,
) -> Result<Vec<ControlNode>, ControlError> {
    let err = |m: String| Err(ControlError::Enumerate(m));
    if variants.is_empty() || block_sizes.is_empty() {
        return err("variant and block-size sets must be non-empty".into());
    }
    if !(1..=3).contains(&depth) {
        return err(format!("depth must be 1..=3, got {depth}"));
    }
    let count = op.variant_count();
    if let Some(v) = variants.iter().find(|&&v| v == 0 || v > count) {
        return err(format!("{op} has variants 1..={count}, got {v}"));
    }
    if block_sizes.contains(&0) {
        return err("block sizes must be >= 1".into());
    }
    if op == OpKind::Gemm {
        if depth != 1 {
            return err("gemm trees have a single level".into());
        }
        return Ok(block_sizes
            .iter()
            .map(|&kc| {
                ControlNode::gemm(Some(KernelOverrides {
                    kc: Some(kc),
                    ..Default::default()
                }))
            })
            .collect());
    }
    if op == OpKind::Ltlt && depth != 1 {
        return err("ltlt supports a single blocked level".into());
    }
    let mut level: Vec<(u8, usize)> = vec![];
    for &v in variants {
        for &bs in block_sizes {
            level.push((v, bs));
        }
    }
    let mut trees: Vec<ControlNode> = (1..=count).map(|v| ControlNode::unblocked(op, v)).collect();
    for _ in 0..depth {
        let mut next = Vec::with_capacity(level.len() * trees.len());
        for &(v, bs) in &level {
            for child in &trees {
                next.push(ControlNode::blocked(op, v, bs, Some(child.clone())));
            }
        }
        trees = next;
    }
    Ok(trees)
}
