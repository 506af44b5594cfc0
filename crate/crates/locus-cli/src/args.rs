use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use locus::corpus::{CorpusId, Example, TheoryId};
use locus::formula::{ClassFilter, Fragment};
use locus::structure::FiniteStructure;
use locus::theory::{RawTheory, TheorySpec};

use crate::report::input;

#[derive(Parser, Debug)]
#[command(name = "locus", version, about = "Checks for finite local structures and their theories")]
pub struct Cli {
    /// Worker threads for parallel checks.
    #[arg(long, global = true, env = "LOCUS_JOBS")]
    pub jobs: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
    /// Seed recorded in the report.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print progress to stderr.
    #[arg(long, short = 'v', global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and validate a signature, structure, theory or direct system file.
    Validate(ValidateArgs),
    /// Evaluate a formula in a structure.
    Eval(EvalArgs),
    /// List homomorphisms between two structures.
    Homs(HomsArgs),
    /// Decide whether homomorphisms are positive embeddings.
    Pe(PeArgs),
    /// Decide whether a structure is locally positively closed in a catalogue.
    Pc(PcArgs),
    /// Denials, approximation and complementarity over a theory.
    Denials(DenialsArgs),
    /// Theory-level checks.
    Theory {
        #[command(subcommand)]
        action: TheoryAction,
    },
    /// Direct limit of a system of structures.
    Limit(LimitArgs),
    /// Built-in example structures and theories.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Check the locality axioms A1-A5.
    Axioms(AxiomsArgs),
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub signature: Option<PathBuf>,
    #[arg(long)]
    pub structure: Option<String>,
    #[arg(long)]
    pub theory: Option<String>,
    #[arg(long)]
    pub system: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Structure file, or `corpus:ID`.
    #[arg(long)]
    pub structure: String,
    #[arg(long)]
    pub formula: String,
    /// Bindings `x=label`, or `x:sort=label`.
    #[arg(long = "env", value_name = "VAR=LABEL", allow_hyphen_values = true)]
    pub env: Vec<String>,
}

#[derive(Args, Debug)]
pub struct HomsArgs {
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub injective: bool,
    /// Fix images, `a=b` or `sort:a=b`.
    #[arg(long = "pin", value_name = "A=B", allow_hyphen_values = true)]
    pub pins: Vec<String>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum PeMode {
    Retraction,
    Diagram,
    Fragment,
}

#[derive(Args, Debug)]
pub struct PeArgs {
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    /// The map, `a=b` or `sort:a=b` per element; all homomorphisms when absent.
    #[arg(long = "map", value_name = "A=B", allow_hyphen_values = true)]
    pub map: Vec<String>,
    #[arg(long, value_enum, default_value = "retraction")]
    pub mode: PeMode,
    #[command(flatten)]
    pub fragment: FragmentArgs,
}

#[derive(Args, Debug)]
pub struct PcArgs {
    #[arg(long)]
    pub structure: String,
    /// Catalogue members.
    #[arg(long, num_args = 1.., required = true)]
    pub catalogue: Vec<String>,
    /// Cross-check every verdict by formula reflection over the fragment.
    #[arg(long)]
    pub cross_check: bool,
    #[command(flatten)]
    pub fragment: FragmentArgs,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum Relation {
    Approx,
    Complementary,
}

#[derive(Args, Debug)]
pub struct DenialsArgs {
    #[command(flatten)]
    pub theory: TheoryArgs,
    #[arg(long)]
    pub formula: String,
    /// Compare with this formula instead of listing denials.
    #[arg(long)]
    pub against: Option<String>,
    #[arg(long, value_enum, default_value = "approx")]
    pub relation: Relation,
}

#[derive(Subcommand, Debug)]
pub enum TheoryAction {
    /// Whether every local model satisfies a sentence.
    Entails {
        #[command(flatten)]
        theory: TheoryArgs,
        #[arg(long)]
        formula: String,
    },
    /// Whether a positive sentence is consistent with the theory.
    Member {
        #[command(flatten)]
        theory: TheoryArgs,
        #[arg(long)]
        formula: String,
    },
    /// Irreducibility, plain or within locality elements.
    Irreducible {
        #[command(flatten)]
        theory: TheoryArgs,
        /// One locality element per sort, e.g. `d6`.
        #[arg(long, value_delimiter = ',')]
        uniform: Vec<String>,
        /// Try every choice of locality elements.
        #[arg(long, conflicts_with = "uniform")]
        search: bool,
    },
    /// Local joint continuation property.
    Ljcp {
        #[command(flatten)]
        theory: TheoryArgs,
    },
    /// The completeness hierarchy and its implications.
    Hierarchy {
        #[command(flatten)]
        theory: TheoryArgs,
    },
    /// Bound of a formula in one free variable.
    Bound {
        #[command(flatten)]
        theory: TheoryArgs,
        #[arg(long)]
        formula: String,
    },
    /// Search for a locality gap.
    Probe {
        #[command(flatten)]
        theory: TheoryArgs,
    },
    /// Ball presentation of each catalogue member.
    Balls {
        #[command(flatten)]
        theory: TheoryArgs,
    },
}

#[derive(Args, Debug)]
pub struct LimitArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// Sentences to check against the limit lemma.
    #[arg(long = "formula")]
    pub formulas: Vec<String>,
    /// Write the limit structure here.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum CorpusAction {
    /// List built-in ids.
    List,
    /// Write a structure or theory file.
    Build { id: String },
    /// Run the example checks; all examples when none are named.
    Check { scope: Vec<String> },
}

#[derive(Args, Debug)]
pub struct AxiomsArgs {
    #[arg(long)]
    pub structure: String,
}

/// Theory file or `corpus:ID`, plus overrides.
#[derive(Args, Debug)]
pub struct TheoryArgs {
    #[arg(long)]
    pub theory: String,
    #[arg(long)]
    pub size_bound: Option<usize>,
    #[command(flatten)]
    pub fragment: FragmentArgs,
}

impl TheoryArgs {
    pub fn load(&self) -> Result<TheorySpec> {
        let mut t = load_theory(&self.theory)?;
        let frag = self.fragment.over(t.fragment.clone())?;
        t = t.with_fragment(frag);
        if let Some(b) = self.size_bound {
            if b == 0 {
                return Err(input(anyhow!("size bound must be positive")));
            }
            t = t.with_size_bound(b);
        }
        Ok(t)
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct FragmentArgs {
    /// Quantifier depth.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Connective width.
    #[arg(long)]
    pub width: Option<usize>,
    /// Total atom budget.
    #[arg(long)]
    pub atoms: Option<usize>,
    /// Free variables per sort.
    #[arg(long)]
    pub free: Option<usize>,
    /// positive, pp, local_positive, local_pp, qf_positive, negative or pi1_local.
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub relations: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub locality: Option<Vec<String>>,
}

impl FragmentArgs {
    /// `base` with the given fields replaced.
    pub fn over(&self, mut base: Fragment) -> Result<Fragment> {
        if let Some(d) = self.depth {
            base.max_depth = d;
        }
        if let Some(w) = self.width {
            if w == 0 {
                return Err(input(anyhow!("width must be positive")));
            }
            base.max_width = w;
        }
        if self.atoms.is_some() {
            base.max_atoms = self.atoms;
        }
        if let Some(f) = self.free {
            base.max_free_per_sort = f;
        }
        if let Some(c) = &self.class {
            base.class = parse_class(c)?;
        }
        if self.relations.is_some() {
            base.relations = self.relations.clone();
        }
        if self.locality.is_some() {
            base.locality = self.locality.clone();
        }
        Ok(base)
    }

    pub fn or_default(&self) -> Result<Fragment> {
        self.over(Fragment::new(1, 2, ClassFilter::Positive))
    }
}

fn parse_class(s: &str) -> Result<ClassFilter> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| input(anyhow!("unknown formula class {s}")))
}

pub fn load_structure(spec: &str) -> Result<FiniteStructure> {
    match spec.strip_prefix("corpus:") {
        Some(id) => {
            let id: CorpusId = id.parse().map_err(input)?;
            id.build().map_err(input)
        }
        None => FiniteStructure::from_file(Path::new(spec)).map_err(input),
    }
}

pub fn load_theory(spec: &str) -> Result<TheorySpec> {
    match spec.strip_prefix("corpus:") {
        Some(id) => {
            let id: TheoryId = id.parse().map_err(input)?;
            id.build().map_err(input)
        }
        None => RawTheory::from_file(Path::new(spec)).map_err(input),
    }
}

pub fn parse_scope(names: &[String]) -> Result<Vec<Example>> {
    if names.is_empty() || names.iter().any(|n| n == "all") {
        return Ok(Example::ALL.to_vec());
    }
    names.iter().map(|n| n.parse::<Example>().map_err(input)).collect()
}

/// Splits `sort:a=b` or `a=b`; the sort defaults to the only one.
pub fn split_binding<'a>(text: &'a str, sorts: &[String]) -> Result<(usize, &'a str, &'a str)> {
    let (lhs, rhs) = text.split_once('=').ok_or_else(|| input(anyhow!("expected NAME=VALUE, got {text}")))?;
    let (sort, name) = match lhs.split_once(':') {
        Some((s, n)) => {
            let idx = sorts.iter().position(|x| x == s).ok_or_else(|| input(anyhow!("unknown sort {s}")))?;
            (idx, n)
        }
        None if sorts.len() == 1 => (0, lhs),
        None => return Err(input(anyhow!("{text}: name the sort as sort:{lhs} in a many-sorted signature"))),
    };
    Ok((sort, name.trim(), rhs.trim()))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(input)
}
