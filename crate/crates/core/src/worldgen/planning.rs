//! Itinerary-planning worlds: a shuffled city of 39 sites with random
//! features, and a user with weighted preferences over them.

use std::collections::BTreeMap;
use std::fmt;

use once_cell::sync::Lazy;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GenError;

/// Site categories. Sights are museums and landmarks, outdoor sites are parks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Restaurant,
    Cafe,
    Museum,
    Bar,
    Landmark,
    Park,
    Shop,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Restaurant,
        Category::Cafe,
        Category::Museum,
        Category::Bar,
        Category::Landmark,
        Category::Park,
        Category::Shop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Restaurant => "restaurant",
            Category::Cafe => "cafe",
            Category::Museum => "museum",
            Category::Bar => "bar",
            Category::Landmark => "landmark",
            Category::Park => "park",
            Category::Shop => "shop",
        }
    }

    pub fn from_name(name: &str) -> Option<Category> {
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(name.trim()))
    }

    /// Estimated price choices in dollars.
    fn price_choices(self) -> Vec<u32> {
        match self {
            Category::Restaurant => (1..=15).map(|i| i * 10).collect(),
            Category::Cafe => vec![5, 10, 15, 20],
            Category::Bar => vec![20, 30, 40, 50, 60],
            Category::Park => vec![0],
            Category::Landmark => vec![0, 0, 5, 10],
            Category::Museum => vec![0, 10, 20, 30, 40],
            Category::Shop => (5..=40).map(|i| i * 10).collect(),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Site features. Variants are declared in alphabetical order of their display
/// names so that `BTreeMap<Feature, _>` iterates the way scorecards list them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "accepts reservations")]
    AcceptsReservations,
    #[serde(rename = "alcohol type")]
    AlcoholType,
    #[serde(rename = "ambience")]
    Ambience,
    #[serde(rename = "cuisine")]
    Cuisine,
    #[serde(rename = "good for groups")]
    GoodForGroups,
    #[serde(rename = "good for kids")]
    GoodForKids,
    #[serde(rename = "has parking")]
    HasParking,
    #[serde(rename = "has takeout")]
    HasTakeout,
    #[serde(rename = "has wifi")]
    HasWifi,
    #[serde(rename = "live music")]
    LiveMusic,
    #[serde(rename = "open late")]
    OpenLate,
    #[serde(rename = "outdoor seating")]
    OutdoorSeating,
    #[serde(rename = "rating")]
    Rating,
    #[serde(rename = "touristy")]
    Touristy,
    #[serde(rename = "vegan options")]
    VeganOptions,
    #[serde(rename = "vegetarian options")]
    VegetarianOptions,
    #[serde(rename = "viewpoint")]
    Viewpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Bool,
    Categorical(&'static [&'static str]),
    Rating,
}

pub const CUISINES: &[&str] = &[
    "american", "chinese", "ethiopian", "french", "japanese", "korean", "kosher", "seafood",
    "spanish", "thai",
];
pub const AMBIENCES: &[&str] = &[
    "casual", "classy", "divey", "hipster", "intimate", "romantic", "serious", "trendy",
];
pub const ALCOHOL_TYPES: &[&str] = &["beer", "cocktails", "wine"];
pub const RATINGS: &[f64] = &[1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];

impl Feature {
    pub const ALL: [Feature; 17] = [
        Feature::AcceptsReservations,
        Feature::AlcoholType,
        Feature::Ambience,
        Feature::Cuisine,
        Feature::GoodForGroups,
        Feature::GoodForKids,
        Feature::HasParking,
        Feature::HasTakeout,
        Feature::HasWifi,
        Feature::LiveMusic,
        Feature::OpenLate,
        Feature::OutdoorSeating,
        Feature::Rating,
        Feature::Touristy,
        Feature::VeganOptions,
        Feature::VegetarianOptions,
        Feature::Viewpoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::AcceptsReservations => "accepts reservations",
            Feature::AlcoholType => "alcohol type",
            Feature::Ambience => "ambience",
            Feature::Cuisine => "cuisine",
            Feature::GoodForGroups => "good for groups",
            Feature::GoodForKids => "good for kids",
            Feature::HasParking => "has parking",
            Feature::HasTakeout => "has takeout",
            Feature::HasWifi => "has wifi",
            Feature::LiveMusic => "live music",
            Feature::OpenLate => "open late",
            Feature::OutdoorSeating => "outdoor seating",
            Feature::Rating => "rating",
            Feature::Touristy => "touristy",
            Feature::VeganOptions => "vegan options",
            Feature::VegetarianOptions => "vegetarian options",
            Feature::Viewpoint => "viewpoint",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        let name = name.trim();
        Feature::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(name))
    }

    pub fn kind(self) -> FeatureKind {
        match self {
            Feature::Cuisine => FeatureKind::Categorical(CUISINES),
            Feature::Ambience => FeatureKind::Categorical(AMBIENCES),
            Feature::AlcoholType => FeatureKind::Categorical(ALCOHOL_TYPES),
            Feature::Rating => FeatureKind::Rating,
            _ => FeatureKind::Bool,
        }
    }

    /// Which categories may carry this feature.
    pub fn legal_for(self, category: Category) -> bool {
        use Category::*;
        match self {
            Feature::Rating
            | Feature::HasParking
            | Feature::Touristy
            | Feature::OpenLate
            | Feature::GoodForGroups => true,
            Feature::HasTakeout | Feature::Cuisine | Feature::AcceptsReservations => {
                category == Restaurant
            }
            Feature::GoodForKids => category != Bar,
            Feature::Ambience | Feature::OutdoorSeating => {
                matches!(category, Restaurant | Cafe | Bar)
            }
            Feature::VegetarianOptions | Feature::VeganOptions => {
                matches!(category, Restaurant | Cafe)
            }
            Feature::LiveMusic => matches!(category, Restaurant | Bar),
            Feature::HasWifi => category == Cafe,
            Feature::AlcoholType => category == Bar,
            Feature::Viewpoint => category == Park,
        }
    }

    pub fn legal_features(category: Category) -> Vec<Feature> {
        Feature::ALL
            .into_iter()
            .filter(|f| f.legal_for(category))
            .collect()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Bool(bool),
    Rating(f64),
    Text(String),
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Bool(true) => f.write_str("True"),
            FeatureValue::Bool(false) => f.write_str("False"),
            FeatureValue::Rating(r) => f.write_str(&format_number(*r)),
            FeatureValue::Text(t) => f.write_str(t),
        }
    }
}

/// `1.0` renders as `1`, `4.5` as `4.5`.
pub fn format_number(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub name: String,
    pub category: Category,
    pub price: u32,
    pub location: [f64; 2],
    pub features: BTreeMap<Feature, FeatureValue>,
}

impl Site {
    /// Comma-separated summary used by the `info` query column: true booleans
    /// by name, categorical values bare, rating as `rating: n`.
    pub fn info(&self) -> String {
        let mut parts: Vec<String> = self
            .features
            .iter()
            .filter_map(|(feature, value)| match value {
                FeatureValue::Bool(true) => Some(feature.name().to_string()),
                FeatureValue::Bool(false) => None,
                FeatureValue::Rating(r) => Some(format!("rating: {}", format_number(*r))),
                FeatureValue::Text(t) => Some(t.clone()),
            })
            .collect();
        parts.sort();
        parts.join(", ")
    }
}

/// What a feature preference asks of a site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "want", content = "value", rename_all = "kebab-case")]
pub enum FeatureWant {
    Is(bool),
    OneOf(Vec<String>),
    AtLeast(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PreferenceKind {
    Feature { feature: Feature, want: FeatureWant },
    WantToGo { sites: Vec<String> },
    Budget { limit: u32 },
    AtLeastOne { category: Category },
    Distance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    #[serde(flatten)]
    pub kind: PreferenceKind,
    /// Hidden positive weight. Never shown to the user.
    pub weight: f64,
    pub description: String,
}

impl Preference {
    /// +1 when the site matches, -1 when it defines the feature with a
    /// conflicting value, 0 when the feature is absent or this is not a
    /// feature preference.
    pub fn site_match(&self, site: &Site) -> f64 {
        let PreferenceKind::Feature { feature, want } = &self.kind else {
            return 0.0;
        };
        let Some(value) = site.features.get(feature) else {
            return 0.0;
        };
        let hit = match (want, value) {
            (FeatureWant::Is(b), FeatureValue::Bool(v)) => b == v,
            (FeatureWant::OneOf(options), FeatureValue::Text(v)) => {
                options.iter().any(|o| o.eq_ignore_ascii_case(v))
            }
            (FeatureWant::AtLeast(min), FeatureValue::Rating(r)) => r >= min,
            _ => return 0.0,
        };
        if hit {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningWorld {
    pub k: usize,
    pub s: usize,
    pub miles_per_unit: f64,
    pub sites: Vec<Site>,
    pub preferences: Vec<Preference>,
}

impl PlanningWorld {
    /// Travel distance in miles.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let [ax, ay] = self.sites[a].location;
        let [bx, by] = self.sites[b].location;
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() * self.miles_per_unit
    }

    pub fn site_index(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.sites
            .iter()
            .position(|s| s.name == name)
            .or_else(|| {
                self.sites
                    .iter()
                    .position(|s| s.name.eq_ignore_ascii_case(name))
            })
    }

    pub fn distance_weight(&self) -> f64 {
        self.preferences
            .iter()
            .find(|p| matches!(p.kind, PreferenceKind::Distance))
            .map_or(0.0, |p| p.weight)
    }
}

#[derive(Debug, Deserialize)]
struct SeedSite {
    name: String,
    category: Category,
    location: [f64; 2],
}

#[derive(Debug, Deserialize)]
struct SeedList {
    #[allow(dead_code)]
    version: u32,
    miles_per_unit: f64,
    sites: Vec<SeedSite>,
}

#[derive(Debug, Deserialize)]
struct Exclusion {
    feature: Feature,
    value: bool,
}

#[derive(Debug, Deserialize)]
struct Templates {
    #[allow(dead_code)]
    version: u32,
    boolean: BTreeMap<Feature, BTreeMap<String, String>>,
    categorical: BTreeMap<Feature, String>,
    rating: String,
    budget: String,
    distance: String,
    want_to_go_one: String,
    want_to_go_many: String,
    at_least_one: String,
    exclusions: Vec<Exclusion>,
}

static SEED_LIST: Lazy<SeedList> = Lazy::new(|| {
    serde_json::from_str(include_str!("../../data/sites.json")).expect("valid sites.json")
});

static TEMPLATES: Lazy<Templates> = Lazy::new(|| {
    serde_json::from_str(include_str!("../../data/preferences.json"))
        .expect("valid preferences.json")
});

pub fn seed_site_count() -> usize {
    SEED_LIST.sites.len()
}

/// True when a boolean feature preference is on the exclusion list.
pub fn is_excluded(feature: Feature, value: bool) -> bool {
    TEMPLATES
        .exclusions
        .iter()
        .any(|e| e.feature == feature && e.value == value)
}

fn weight(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(1..=10) as f64
}

fn join_options(values: &[String]) -> String {
    values.join(", ")
}

pub(super) fn generate(seed_rng: &mut ChaCha8Rng, k: usize, s: usize) -> Result<PlanningWorld, GenError> {
    let seeds = &SEED_LIST.sites;
    if k == 0 || k > seeds.len() {
        return Err(GenError::InvalidParams(format!(
            "itinerary length k={k} must be in 1..={}",
            seeds.len()
        )));
    }
    if s < 2 {
        return Err(GenError::InvalidParams(format!(
            "preference count s={s} must leave room for price and distance"
        )));
    }
    let rng = seed_rng;

    let mut locations: Vec<[f64; 2]> = seeds.iter().map(|s| s.location).collect();
    locations.shuffle(rng);

    let sites: Vec<Site> = seeds
        .iter()
        .zip(locations)
        .map(|(seed, location)| random_site(rng, seed, location))
        .collect();

    let preferences = random_preferences(rng, &sites, s);

    Ok(PlanningWorld {
        k,
        s,
        miles_per_unit: SEED_LIST.miles_per_unit,
        sites,
        preferences,
    })
}

fn random_site(rng: &mut ChaCha8Rng, seed: &SeedSite, location: [f64; 2]) -> Site {
    let mut legal = Feature::legal_features(seed.category);
    legal.shuffle(rng);
    let features = legal
        .into_iter()
        .take(5)
        .map(|feature| {
            let value = match feature.kind() {
                FeatureKind::Bool => FeatureValue::Bool(rng.random_bool(0.5)),
                FeatureKind::Categorical(options) => {
                    FeatureValue::Text(options.choose(rng).unwrap().to_string())
                }
                FeatureKind::Rating => FeatureValue::Rating(*RATINGS.choose(rng).unwrap()),
            };
            (feature, value)
        })
        .collect();
    let price = *seed.category.price_choices().choose(rng).unwrap();
    Site {
        name: seed.name.clone(),
        category: seed.category,
        price,
        location,
        features,
    }
}

fn random_preferences(rng: &mut ChaCha8Rng, sites: &[Site], s: usize) -> Vec<Preference> {
    let t = &*TEMPLATES;
    let mut optional: Vec<Preference> = Vec::new();

    for (feature, texts) in &t.boolean {
        let mut value = rng.random_bool(0.75);
        if is_excluded(*feature, value) || !texts.contains_key(&value.to_string()) {
            value = !value;
        }
        let Some(text) = texts.get(&value.to_string()) else {
            continue;
        };
        if is_excluded(*feature, value) {
            continue;
        }
        optional.push(Preference {
            kind: PreferenceKind::Feature {
                feature: *feature,
                want: FeatureWant::Is(value),
            },
            weight: weight(rng),
            description: text.clone(),
        });
    }

    for (feature, template) in &t.categorical {
        let FeatureKind::Categorical(options) = feature.kind() else {
            continue;
        };
        let n = rng.random_range(1..=options.len().min(4));
        let mut picked: Vec<String> = options
            .choose_multiple(rng, n)
            .map(|s| s.to_string())
            .collect();
        picked.sort_by_key(|o| options.iter().position(|x| x == o));
        optional.push(Preference {
            description: template.replace("{values}", &join_options(&picked)),
            kind: PreferenceKind::Feature {
                feature: *feature,
                want: FeatureWant::OneOf(picked),
            },
            weight: weight(rng),
        });
    }

    let min_rating = *[3.0, 3.5, 4.0, 4.5].choose(rng).unwrap();
    optional.push(Preference {
        kind: PreferenceKind::Feature {
            feature: Feature::Rating,
            want: FeatureWant::AtLeast(min_rating),
        },
        weight: weight(rng),
        description: t.rating.replace("{value}", &format_number(min_rating)),
    });

    let n_targets = if rng.random_bool(0.7) { 1 } else { rng.random_range(2..=3) };
    let targets: Vec<String> = sites
        .choose_multiple(rng, n_targets)
        .map(|s| s.name.clone())
        .collect();
    let template = if n_targets == 1 {
        &t.want_to_go_one
    } else {
        &t.want_to_go_many
    };
    optional.push(Preference {
        description: template.replace("{sites}", &targets.join(", ")),
        kind: PreferenceKind::WantToGo { sites: targets },
        weight: weight(rng),
    });

    let category = *Category::ALL.choose(rng).unwrap();
    optional.push(Preference {
        kind: PreferenceKind::AtLeastOne { category },
        weight: weight(rng),
        description: t.at_least_one.replace("{category}", category.name()),
    });

    optional.shuffle(rng);

    let limit = rng.random_range(2..=12) * 10;
    let mut chosen = vec![Preference {
        kind: PreferenceKind::Budget { limit },
        weight: weight(rng),
        description: t.budget.replace("{value}", &limit.to_string()),
    }];
    for pref in optional {
        if chosen.len() + 1 >= s {
            break;
        }
        if rng.random_bool(0.5) {
            chosen.push(pref);
        }
    }
    chosen.shuffle(rng);
    chosen.push(Preference {
        kind: PreferenceKind::Distance,
        weight: weight(rng),
        description: t.distance.clone(),
    });
    chosen
}
