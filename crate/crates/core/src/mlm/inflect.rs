//! Rule-based English singularization for predicted hypernym words.

const IRREGULAR: &[(&str, &str)] = &[
    ("people", "person"),
    ("persons", "person"),
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("geese", "goose"),
    ("mice", "mouse"),
    ("lice", "louse"),
    ("oxen", "ox"),
    ("wives", "wife"),
    ("knives", "knife"),
    ("lives", "life"),
    ("wolves", "wolf"),
    ("leaves", "leaf"),
    ("thieves", "thief"),
    ("shelves", "shelf"),
    ("halves", "half"),
    ("selves", "self"),
    ("calves", "calf"),
    ("loaves", "loaf"),
    ("movies", "movie"),
    ("cookies", "cookie"),
    ("zombies", "zombie"),
    ("rookies", "rookie"),
    ("hippies", "hippie"),
    ("criteria", "criterion"),
    ("phenomena", "phenomenon"),
    ("data", "datum"),
    ("media", "medium"),
    ("alumni", "alumnus"),
    ("cacti", "cactus"),
    ("fungi", "fungus"),
    ("nuclei", "nucleus"),
    ("stimuli", "stimulus"),
    ("analyses", "analysis"),
    ("crises", "crisis"),
    ("theses", "thesis"),
    ("hypotheses", "hypothesis"),
    ("diagnoses", "diagnosis"),
    ("indices", "index"),
    ("matrices", "matrix"),
    ("vertices", "vertex"),
    ("heroes", "hero"),
    ("potatoes", "potato"),
    ("tomatoes", "tomato"),
    ("echoes", "echo"),
    ("vetoes", "veto"),
    ("torpedoes", "torpedo"),
    ("quizzes", "quiz"),
];

/// Words ending in `s` that are not plurals (or whose plural is identical).
const INVARIANT: &[&str] = &[
    "species",
    "series",
    "news",
    "means",
    "physics",
    "mathematics",
    "economics",
    "politics",
    "athletics",
    "ethics",
    "linguistics",
    "statistics",
    "aircraft",
    "sheep",
    "fish",
    "deer",
    "headquarters",
    "barracks",
    "crossroads",
    "chassis",
    "corps",
    "bus",
    "gas",
    "lens",
    "canvas",
    "bias",
    "atlas",
    "alias",
    "christmas",
    "texas",
    "paris",
    "always",
    "perhaps",
    "whereas",
    "thus",
    "this",
    "his",
    "hers",
    "its",
    "ours",
    "yours",
    "theirs",
    "was",
    "has",
    "does",
    "is",
    "as",
    "us",
    "yes",
    "less",
    "unless",
    "across",
    "famous",
    "various",
    "previous",
    "serious",
    "dangerous",
    "religious",
    "nervous",
    "jealous",
    "obvious",
    "anonymous",
    "enormous",
    "numerous",
    "virus",
    "status",
    "campus",
    "bonus",
    "genius",
    "census",
    "chorus",
    "circus",
    "citrus",
    "consensus",
    "octopus",
    "platypus",
    "walrus",
    "apparatus",
    "iris",
    "axis",
    "basis",
    "oasis",
    "tennis",
    "penis",
    "pelvis",
    "diabetes",
    "herpes",
    "rabies",
    "measles",
    "mumps",
    "logistics",
];

/// Returns the singular form of `word`; non-plural words come back unchanged.
///
/// Matching is case-insensitive. Irregular forms are returned lowercase; rule
/// based forms keep the original casing of the retained stem.
pub fn singularize(word: &str) -> String {
    let lower = word.to_lowercase();
    if let Some((_, s)) = IRREGULAR.iter().find(|(p, _)| *p == lower) {
        return (*s).to_string();
    }
    if INVARIANT.contains(&lower.as_str()) || lower.len() <= 3 || !lower.ends_with('s') {
        return word.to_string();
    }
    if lower.ends_with("ss") || lower.ends_with("us") || lower.ends_with("is") {
        return word.to_string();
    }
    let stem = |n: usize| word[..word.len() - n].to_string();
    if lower.ends_with("ies") {
        return if lower.len() > 4 {
            format!("{}y", stem(3))
        } else {
            stem(1)
        };
    }
    // buses, viruses, campuses: the -es stem is itself a known -s singular
    if lower.ends_with("es") && INVARIANT.contains(&&lower[..lower.len() - 2]) {
        return stem(2);
    }
    // classes, boxes, buzzes, churches, wishes
    if lower.ends_with("sses")
        || lower.ends_with("xes")
        || lower.ends_with("zzes")
        || lower.ends_with("ches")
        || lower.ends_with("shes")
    {
        return stem(2);
    }
    // houses, causes, nurses, prizes
    stem(1)
}
