//! Generator for the bundled "jargon" corpus: maintenance notes for
//! invented products with codes such as `PHX-121`, one gold query per
//! document, and a synonym lexicon for the substitution probe.
//!
//! The generated files are committed under `fixtures/jargon/`; a test keeps
//! them in sync with this generator.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::corpus::Document;
use crate::error::Result;
use crate::eval::EvalQuery;
use crate::rng::SplitMix64;
use crate::text::{tokenize, TokenizerConfig};

pub const FIXTURE_SEED: u64 = 20_240_601;

const FAMILIES: [(&str, &str); 20] = [
    ("PHX", "phoenix"),
    ("ZRX", "zenith"),
    ("KLM", "kodiak"),
    ("TRV", "trident"),
    ("QDN", "quasar"),
    ("BXL", "bastion"),
    ("VRM", "vortex"),
    ("HLD", "halcyon"),
    ("MKT", "monarch"),
    ("SNR", "sentinel"),
    ("DRV", "dynamo"),
    ("GLX", "galaxy"),
    ("PRT", "paragon"),
    ("CYN", "canyon"),
    ("FLW", "falcon"),
    ("JTR", "jupiter"),
    ("WKS", "wolverine"),
    ("NVA", "nova"),
    ("RZB", "razorback"),
    ("TLK", "talon"),
];

const COMPONENTS: [(&str, &str); 16] = [
    ("impeller", "propeller"),
    ("gasket", "packing"),
    ("manifold", "distributor"),
    ("actuator", "driver"),
    ("bushing", "sleeve"),
    ("solenoid", "electromagnet"),
    ("flange", "rim"),
    ("coupling", "connector"),
    ("diaphragm", "membrane"),
    ("bearing", "journal"),
    ("rotor", "turbine"),
    ("stator", "armature"),
    ("nozzle", "spout"),
    ("plunger", "ram"),
    ("spindle", "axle"),
    ("valve", "tap"),
];

const ATTRIBUTES: [(&str, &str, &str); 8] = [
    ("torque", "twist", "Nm"),
    ("pressure", "force", "bar"),
    ("clearance", "gap", "mm"),
    ("temperature", "heat", "degC"),
    ("voltage", "potential", "volts"),
    ("flow", "throughput", "lpm"),
    ("speed", "velocity", "rpm"),
    ("tension", "strain", "newtons"),
];

const ACTIONS: [&str; 8] = ["inspect", "replace", "calibrate", "lubricate", "flush", "tighten", "align", "test"];
const SYMPTOMS: [&str; 6] = ["scoring", "pitting", "leakage", "vibration", "discoloration", "cracking"];
const APPLICATIONS: [&str; 8] = [
    "marine pumping",
    "mine drainage",
    "chemical dosing",
    "food processing",
    "irrigation",
    "district heating",
    "wastewater lifting",
    "paint circulation",
];
const FILLER: [&str; 6] = [
    "Always follow the site safety procedure and isolate power before work begins.",
    "This note supersedes earlier revisions of the service manual.",
    "Keep a copy of this note with the equipment log.",
    "Contact the regional support desk if any step cannot be completed.",
    "Use only genuine spare parts supplied through the approved channel.",
    "Dispose of used fluids according to local regulations.",
];

/// Query-template words that are not product vocabulary, with substitutes.
const TEMPLATE_SYNONYMS: [(&str, &str); 6] = [
    ("set", "adjusted"),
    ("rated", "certified"),
    ("stay", "remain"),
    ("service", "maintenance"),
    ("value", "figure"),
    ("required", "mandated"),
];

#[derive(Debug, Clone)]
pub struct JargonFixture {
    pub documents: Vec<Document>,
    pub gold: Vec<EvalQuery>,
    pub synonyms: BTreeMap<String, String>,
}

fn pick<'a, T>(rng: &mut SplitMix64, items: &'a [T]) -> &'a T {
    &items[rng.below(items.len() as u64) as usize]
}

/// Pronounceable invented words, unique across every call on one pool.
struct WordPool {
    rng: SplitMix64,
    used: BTreeSet<String>,
}

impl WordPool {
    fn next(&mut self) -> String {
        const ONSETS: [&str; 18] = [
            "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st",
        ];
        const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
        const CODAS: [&str; 6] = ["n", "r", "l", "x", "s", "th"];
        loop {
            let syllables = 2 + self.rng.below(2);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(pick(&mut self.rng, &ONSETS));
                w.push_str(pick(&mut self.rng, &VOWELS));
            }
            w.push_str(pick(&mut self.rng, &CODAS));
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn ing(action: &str) -> String {
    match action.strip_suffix('e') {
        Some(stem) => format!("{stem}ing"),
        None => format!("{action}ing"),
    }
}

fn spec_sentence(rng: &mut SplitMix64, code: &str, comp: &str, attr: &str, unit: &str) -> String {
    let value = 10 + rng.below(90);
    match rng.below(3) {
        0 => format!(
            "Set the {comp} {attr} on the {code} to {value} {unit} before {} the assembly.",
            ing(pick(rng, &ACTIONS))
        ),
        1 => format!("The {code} {comp} is rated for a {attr} of {value} {unit}."),
        _ => format!("On the {code} the {comp} {attr} must stay at {value} {unit} during service."),
    }
}

fn gold_question(rng: &mut SplitMix64, code: &str, comp: &str, attr: &str) -> String {
    match rng.below(3) {
        0 => format!("What {attr} should the {comp} on the {code} be set to?"),
        1 => format!("Which {attr} value applies to the {code} {comp}?"),
        _ => format!("For the {code}, what is the required {comp} {attr}?"),
    }
}

pub fn generate(seed: u64) -> JargonFixture {
    let mut rng = SplitMix64::derive(seed, b"jargon");
    let mut pool = WordPool {
        rng: SplitMix64::derive(seed, b"words"),
        used: BTreeSet::new(),
    };
    let mut numbers: Vec<u64> = (100..1000).collect();
    rng.shuffle(&mut numbers);

    let mut documents = Vec::new();
    let mut gold = Vec::new();
    let mut synonyms = BTreeMap::new();
    for (prefix, name) in FAMILIES {
        synonyms.insert(prefix.to_lowercase(), name.to_string());
    }
    for (c, s) in COMPONENTS {
        synonyms.insert(c.to_string(), s.to_string());
    }
    for (a, s, _) in ATTRIBUTES {
        synonyms.insert(a.to_string(), s.to_string());
    }
    for (w, s) in TEMPLATE_SYNONYMS {
        synonyms.insert(w.to_string(), s.to_string());
    }

    for i in 0..200 {
        let (prefix, _) = FAMILIES[i / 10];
        let number = numbers[i];
        let code = format!("{prefix}-{number}");
        let rare = pool.next();
        synonyms.insert(number.to_string(), pool.next());
        synonyms.insert(rare.clone(), pool.next());

        let mut comps: Vec<usize> = (0..COMPONENTS.len()).collect();
        rng.shuffle(&mut comps);
        let mut attrs: Vec<usize> = (0..ATTRIBUTES.len()).collect();
        rng.shuffle(&mut attrs);

        let intro = format!(
            "The {code} is a compact {rare} unit for {}.",
            pick(&mut rng, &APPLICATIONS)
        );
        let mut body: Vec<String> = Vec::new();
        let n_spec = 1 + rng.below(3) as usize;
        let mut evidence = String::new();
        for s in 0..n_spec {
            let (comp, _) = COMPONENTS[comps[s]];
            let (attr, _, unit) = ATTRIBUTES[attrs[s]];
            let sentence = spec_sentence(&mut rng, &code, comp, attr, unit);
            if s == 0 {
                evidence = sentence.clone();
            }
            body.push(sentence);
        }
        for _ in 0..1 + rng.below(3) {
            let comp = COMPONENTS[comps[3 + rng.below(4) as usize]].0;
            let hours = 500 * (2 + rng.below(17));
            body.push(format!(
                "Technicians should {} the {comp} every {hours} operating hours.",
                pick(&mut rng, &ACTIONS)
            ));
        }
        for _ in 0..rng.below(3) {
            let comp = COMPONENTS[comps[7 + rng.below(4) as usize]].0;
            body.push(format!(
                "If the {comp} shows {}, {} it and record the {code} serial number.",
                pick(&mut rng, &SYMPTOMS),
                pick(&mut rng, &ACTIONS)
            ));
        }
        if rng.below(2) == 0 {
            let comp = COMPONENTS[comps[11]].0;
            body.push(format!("Early {rare} revisions used a different {comp} and are not interchangeable."));
        }
        for _ in 0..1 + rng.below(4) {
            body.push(pick(&mut rng, &FILLER).to_string());
        }
        rng.shuffle(&mut body);
        let mut sentences = vec![intro];
        sentences.extend(body);
        let text = sentences.join(" ");

        let doc_id = format!("doc{i:03}");
        let (comp, _) = COMPONENTS[comps[0]];
        let (attr, _, _) = ATTRIBUTES[attrs[0]];
        gold.push(EvalQuery {
            query_id: format!("gold{i:03}"),
            text: gold_question(&mut rng, &code, comp, attr),
            evidence: vec![evidence],
            chunk_ids: Vec::new(),
        });
        let mut doc = Document::new(doc_id, text);
        doc.metadata.insert("product".into(), code);
        documents.push(doc);
    }
    JargonFixture {
        documents,
        gold,
        synonyms,
    }
}

/// Directory holding the committed fixture files.
pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("jargon")
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const GOLD_FILE: &str = "gold.jsonl";
pub const SYNONYMS_FILE: &str = "synonyms.json";

impl JargonFixture {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        crate::jsonl::write(&dir.join(CORPUS_FILE), &self.documents)?;
        crate::jsonl::write(&dir.join(GOLD_FILE), &self.gold)?;
        crate::jsonl::write_json(&dir.join(SYNONYMS_FILE), &self.synonyms)
    }

    /// Every distinct token of the corpus text.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let cfg = TokenizerConfig::default();
        self.documents.iter().flat_map(|d| tokenize(&d.text, &cfg)).collect()
    }
}

pub fn read_synonyms(path: &Path) -> Result<BTreeMap<String, String>> {
    crate::jsonl::read_json(path)
}
