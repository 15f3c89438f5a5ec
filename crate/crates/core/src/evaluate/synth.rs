use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, LabeledExample, Stage1Label};

use super::EvalError;

/// Keywords and category-specific detail phrases for one emergency type.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCategory {
    pub name: String,
    pub keywords: Vec<String>,
    pub details: Vec<String>,
}

impl PlantedCategory {
    pub fn new(name: &str, keywords: &[&str], details: &[&str]) -> Self {
        Self {
            name: name.into(),
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            details: details.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub size: usize,
    pub positives: usize,
    pub categories: Vec<PlantedCategory>,
    /// Probability of a stage-1 label flip, and independently of surface
    /// noise (letter runs, chat abbreviations) on the text.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            size: 3200,
            positives: 1313,
            categories: default_categories(),
            noise_rate: 0.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn with_noise(mut self, noise_rate: f64) -> Self {
        self.noise_rate = noise_rate;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_size(mut self, size: usize, positives: usize) -> Self {
        self.size = size;
        self.positives = positives;
        self
    }

    pub fn category_names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }
}

pub fn default_categories() -> Vec<PlantedCategory> {
    vec![
        PlantedCategory::new(
            "fire",
            &["fire", "blaze", "smoke"],
            &["people trapped inside", "flames on the third floor", "building is burning"],
        ),
        PlantedCategory::new(
            "accident",
            &["accident", "crash", "collision"],
            &["people injured on the road", "need an ambulance", "bus and car hit"],
        ),
        PlantedCategory::new(
            "earthquake",
            &["earthquake", "tremors", "quake"],
            &["buildings shaking", "walls cracked", "everyone ran outside"],
        ),
        PlantedCategory::new(
            "cyclone",
            &["cyclone", "storm"],
            &["trees fell down", "roofs blown away", "heavy winds and flooding"],
        ),
        PlantedCategory::new(
            "theft",
            &["theft", "robbery", "stolen"],
            &["call the police", "thief ran away", "purse taken from a woman"],
        ),
        PlantedCategory::new(
            "drunk-driving",
            &["drunk driver", "drunk driving"],
            &["car hit the wall", "driver arrested", "car speeding on the highway"],
        ),
    ]
}

/// Places with coordinates inside the default bounding box.
pub const PLACES: &[(&str, f64, f64)] = &[
    ("powai", 19.1176, 72.9060),
    ("andheri", 19.1136, 72.8697),
    ("bandra", 19.0596, 72.8295),
    ("dadar", 19.0178, 72.8478),
    ("colaba", 18.9067, 72.8147),
    ("worli", 19.0166, 72.8166),
    ("juhu", 19.1075, 72.8263),
    ("kurla", 19.0726, 72.8845),
    ("ghatkopar", 19.0860, 72.9090),
    ("chembur", 19.0522, 72.9005),
    ("malad", 19.1874, 72.8484),
    ("goregaon", 19.1663, 72.8526),
    ("thane", 19.2183, 72.9781),
    ("vashi", 19.0771, 72.9986),
];

const OPENERS: &[&str] = &[
    "help", "urgent", "please help", "emergency", "alert", "help us", "urgent help needed",
];

const PREPOSITIONS: &[&str] = &["near", "at", "in"];

const ACTIVITIES: &[&str] = &[
    "having lunch with friends",
    "watching a movie",
    "traffic is slow today",
    "great weather for a walk",
    "new cafe opened",
    "cricket match tonight",
    "shopping for new clothes",
    "studying for exams",
    "waiting for the train",
    "the concert was amazing",
    "best coffee ever",
    "long day at work",
    "birthday party tonight",
    "reading a good book",
    "the sunset looks beautiful",
];

const ENDINGS: &[&str] = &["", "lol", "so happy", "cannot wait", "what a day", "love this city", "finally"];

/// Negatives that use a keyword figuratively.
const FIGURATIVE: &[&str] = &[
    "i am so drunk right now",
    "fire in my office , the boss is angry",
    "this new song is fire",
    "my heart was stolen by this movie",
    "crash course on cooking tonight",
    "a storm of emails at work today",
    "that performance was a blaze of glory",
    "my phone battery is on fire today",
];

/// Chat forms the preprocessing tables map back.
const ABBREVIATIONS: &[(&str, &str)] = &[
    ("please", "plz"),
    ("help", "hlp"),
    ("people", "ppl"),
    ("near", "nr"),
    ("police", "plce"),
    ("building", "bldng"),
];

/// Deterministic labeled corpus with planted category keywords.
///
/// Positives read `[<opener>] <keyword> <near|at|in> <place> <detail>`, so
/// every keyword sits in the same three-word context. Negatives come from benign
/// templates, a share of which use a keyword figuratively.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<Dataset, EvalError> {
    if spec.size == 0 || spec.positives > spec.size {
        return Err(EvalError::InvalidSpec(format!(
            "size {} with {} positives",
            spec.size, spec.positives
        )));
    }
    if !(0.0..1.0).contains(&spec.noise_rate) {
        return Err(EvalError::InvalidSpec(format!("noise rate {}", spec.noise_rate)));
    }
    if spec.categories.is_empty() || spec.categories.iter().any(|c| c.keywords.is_empty() || c.details.is_empty()) {
        return Err(EvalError::InvalidSpec("every category needs keywords and details".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Separate stream so the noise-free skeleton is identical at every rate.
    let mut noise = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x006e_6f69_7365);
    let mut examples = Vec::with_capacity(spec.size);
    for i in 0..spec.size {
        let (place, lat, lon) = *PLACES.choose(&mut rng).expect("places");
        let mut example = if i < spec.positives {
            let cat = &spec.categories[i % spec.categories.len()];
            let keyword = cat.keywords.choose(&mut rng).expect("keywords");
            let opener = OPENERS.choose(&mut rng).expect("openers");
            let prep = PREPOSITIONS.choose(&mut rng).expect("prepositions");
            let detail = cat.details.choose(&mut rng).expect("details");
            let text = if rng.random_bool(0.7) {
                format!("{opener} {keyword} {prep} {place} {detail}")
            } else {
                format!("{keyword} {prep} {place} {detail}")
            };
            LabeledExample::new(text, Stage1Label::Emergency, Some(cat.name.clone()))
        } else {
            let text = if rng.random_bool(0.12) {
                FIGURATIVE.choose(&mut rng).expect("figurative").to_string()
            } else {
                let activity = ACTIVITIES.choose(&mut rng).expect("activities");
                let ending = ENDINGS.choose(&mut rng).expect("endings");
                let mut t = activity.to_string();
                if rng.random_bool(0.5) {
                    let prep = PREPOSITIONS.choose(&mut rng).expect("prepositions");
                    t = format!("{t} {prep} {place}");
                }
                if !ending.is_empty() {
                    t = format!("{t} {ending}");
                }
                t
            };
            LabeledExample::new(text, Stage1Label::NonEmergency, None)
        };
        if spec.noise_rate > 0.0 {
            if noise.random_bool(spec.noise_rate) {
                example.text = add_surface_noise(&example.text, &mut noise);
            }
            if noise.random_bool(spec.noise_rate) {
                example.stage1 = example.stage1.flipped();
                example.category = match example.stage1 {
                    Stage1Label::Emergency => Some(spec.categories.choose(&mut noise).expect("categories").name.clone()),
                    Stage1Label::NonEmergency => None,
                };
            }
        }
        example.lat = Some(lat);
        example.lon = Some(lon);
        examples.push(example);
    }
    examples.shuffle(&mut rng);
    let base: DateTime<Utc> = Utc.with_ymd_and_hms(2017, 3, 1, 0, 0, 0).single().expect("valid date");
    for (i, e) in examples.iter_mut().enumerate() {
        e.timestamp = Some(base + Duration::seconds(37 * i as i64));
    }
    Ok(Dataset::new(examples))
}

fn add_surface_noise(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<String> = text.split(' ').map(String::from).collect();
    let abbreviable: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, w)| ABBREVIATIONS.iter().any(|(full, _)| full == w))
        .map(|(i, _)| i)
        .collect();
    if !abbreviable.is_empty() && rng.random_bool(0.5) {
        let i = *abbreviable.choose(rng).expect("non-empty");
        let short = ABBREVIATIONS.iter().find(|(full, _)| *full == words[i]).expect("listed").1;
        words[i] = short.to_string();
    } else {
        let candidates: Vec<usize> = (0..words.len()).filter(|&i| words[i].len() >= 3).collect();
        if let Some(&i) = candidates.choose(rng) {
            words[i] = stretch(&words[i], rng);
        }
    }
    words.join(" ")
}

/// Repeats one letter so it runs three to five times.
fn stretch(word: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = word.chars().collect();
    let at = rng.random_range(0..chars.len());
    let extra = rng.random_range(2..5);
    let mut out = String::with_capacity(word.len() + extra);
    for (i, &c) in chars.iter().enumerate() {
        out.push(c);
        if i == at {
            for _ in 0..extra {
                out.push(c);
            }
        }
    }
    out
}
