//! Builtin template tables for six topic domains.
//!
//! Every relation contributes one true row per fact and one false row per
//! wrong value of the same relation, so each table can express far more
//! false sentences than true ones. Rows reproducing the exemplar sentences
//! of the original datasets are pinned.

use std::collections::HashSet;

use super::template::{EntityRow, Template, TemplateTable};

fn t(positive: &str, negated: &str) -> Template {
    Template::new(positive, negated).expect("builtin template")
}

/// True rows for each `(key, value)` fact and false rows for every other
/// value the relation takes, unless `excluded(key, value)` holds.
fn relation_filtered(
    key: &str,
    val: &str,
    facts: &[(&str, &str)],
    excluded: impl Fn(&str, &str) -> bool,
) -> Vec<EntityRow> {
    let mut values: Vec<&str> = Vec::new();
    for (_, v) in facts {
        if !values.contains(v) {
            values.push(v);
        }
    }
    let known: HashSet<(&str, &str)> = facts.iter().copied().collect();
    let mut rows = Vec::new();
    for (k, v) in facts {
        rows.push(EntityRow::new(&[(key, k), (val, v)], true));
        for w in &values {
            if w != v && !known.contains(&(*k, *w)) && !excluded(k, w) {
                rows.push(EntityRow::new(&[(key, k), (val, w)], false));
            }
        }
    }
    rows
}

fn relation(key: &str, val: &str, facts: &[(&str, &str)]) -> Vec<EntityRow> {
    relation_filtered(key, val, facts, |_, _| false)
}

/// Single-slot rows: the statement is true exactly for the listed members.
fn membership(slot: &str, members: &[&str], non_members: &[&str]) -> Vec<EntityRow> {
    members
        .iter()
        .map(|m| EntityRow::new(&[(slot, m)], true))
        .chain(non_members.iter().map(|m| EntityRow::new(&[(slot, m)], false)))
        .collect()
}

fn pin(rows: &mut [EntityRow], values: &[(&str, &str)]) {
    let row = rows
        .iter_mut()
        .find(|r| values.iter().all(|(k, v)| r.values.get(*k).map(String::as_str) == Some(*v)))
        .unwrap_or_else(|| panic!("no builtin row {values:?}"));
    row.pinned = true;
}

pub fn all() -> Vec<TemplateTable> {
    vec![animals(), cities(), companies(), elements(), facts(), inventions()]
}

pub fn by_name(name: &str) -> Option<TemplateTable> {
    all().into_iter().find(|t| t.name == name)
}

pub fn names() -> Vec<&'static str> {
    vec!["Animals", "Cities", "Companies", "Elements", "Facts", "Inventions"]
}

const CITIES: &[(&str, &str)] = &[
    ("Tripoli", "Libya"),
    ("Benghazi", "Libya"),
    ("Rome", "Italy"),
    ("Milan", "Italy"),
    ("Naples", "Italy"),
    ("Turin", "Italy"),
    ("Florence", "Italy"),
    ("Venice", "Italy"),
    ("Paris", "France"),
    ("Lyon", "France"),
    ("Marseille", "France"),
    ("Toulouse", "France"),
    ("Berlin", "Germany"),
    ("Munich", "Germany"),
    ("Hamburg", "Germany"),
    ("Cologne", "Germany"),
    ("Madrid", "Spain"),
    ("Barcelona", "Spain"),
    ("Seville", "Spain"),
    ("Valencia", "Spain"),
    ("Lisbon", "Portugal"),
    ("Porto", "Portugal"),
    ("Amsterdam", "the Netherlands"),
    ("Rotterdam", "the Netherlands"),
    ("Brussels", "Belgium"),
    ("Antwerp", "Belgium"),
    ("Vienna", "Austria"),
    ("Salzburg", "Austria"),
    ("Zurich", "Switzerland"),
    ("Geneva", "Switzerland"),
    ("Warsaw", "Poland"),
    ("Krakow", "Poland"),
    ("Prague", "Czechia"),
    ("Budapest", "Hungary"),
    ("Athens", "Greece"),
    ("Thessaloniki", "Greece"),
    ("Istanbul", "Turkey"),
    ("Ankara", "Turkey"),
    ("Cairo", "Egypt"),
    ("Alexandria", "Egypt"),
    ("Tunis", "Tunisia"),
    ("Algiers", "Algeria"),
    ("Casablanca", "Morocco"),
    ("Marrakesh", "Morocco"),
    ("Lagos", "Nigeria"),
    ("Abuja", "Nigeria"),
    ("Nairobi", "Kenya"),
    ("Mombasa", "Kenya"),
    ("Johannesburg", "South Africa"),
    ("Cape Town", "South Africa"),
    ("Tokyo", "Japan"),
    ("Osaka", "Japan"),
    ("Kyoto", "Japan"),
    ("Seoul", "South Korea"),
    ("Busan", "South Korea"),
    ("Beijing", "China"),
    ("Shanghai", "China"),
    ("Shenzhen", "China"),
    ("Mumbai", "India"),
    ("Delhi", "India"),
    ("Bangalore", "India"),
    ("Karachi", "Pakistan"),
    ("Lahore", "Pakistan"),
    ("Dhaka", "Bangladesh"),
    ("Bangkok", "Thailand"),
    ("Hanoi", "Vietnam"),
    ("Jakarta", "Indonesia"),
    ("Manila", "the Philippines"),
    ("Sydney", "Australia"),
    ("Melbourne", "Australia"),
    ("Auckland", "New Zealand"),
    ("Toronto", "Canada"),
    ("Montreal", "Canada"),
    ("Vancouver", "Canada"),
    ("Chicago", "the United States"),
    ("Houston", "the United States"),
    ("Boston", "the United States"),
    ("Mexico City", "Mexico"),
    ("Guadalajara", "Mexico"),
    ("Lima", "Peru"),
    ("Bogota", "Colombia"),
    ("Santiago", "Chile"),
    ("Buenos Aires", "Argentina"),
    ("Sao Paulo", "Brazil"),
    ("Rio de Janeiro", "Brazil"),
    ("Moscow", "Russia"),
    ("Tehran", "Iran"),
    ("Baghdad", "Iraq"),
    ("Riyadh", "Saudi Arabia"),
    ("Stockholm", "Sweden"),
    ("Oslo", "Norway"),
    ("Copenhagen", "Denmark"),
    ("Helsinki", "Finland"),
    ("Dublin", "Ireland"),
    ("London", "the United Kingdom"),
    ("Manchester", "the United Kingdom"),
];

const COUNTRY_NAMES: &[&str] = &[
    "Libya", "Italy", "France", "Germany", "Spain", "Portugal", "Belgium", "Austria", "Switzerland", "Poland",
    "Hungary", "Greece", "Turkey", "Egypt", "Tunisia", "Algeria", "Morocco", "Nigeria", "Kenya", "Japan", "China",
    "India", "Pakistan", "Bangladesh", "Thailand", "Vietnam", "Indonesia", "Australia", "Canada", "Mexico", "Peru",
    "Colombia", "Chile", "Argentina", "Brazil", "Russia", "Iran", "Iraq", "Sweden", "Norway", "Denmark", "Finland",
    "Ireland",
];

pub fn cities() -> TemplateTable {
    let mut rows = relation("city", "country", CITIES);
    pin(&mut rows, &[("city", "Tripoli"), ("country", "Libya")]);
    let city_names: Vec<&str> = CITIES.iter().map(|(c, _)| *c).collect();
    let mut names = membership("name", COUNTRY_NAMES, &city_names);
    pin(&mut names, &[("name", "Rome")]);
    rows.extend(names);
    TemplateTable::new(
        "Cities",
        vec![
            t("{city} is a city in {country}.", "{city} is not a city in {country}."),
            t("{city} is located in {country}.", "{city} is not located in {country}."),
            t("The city of {city} is in {country}.", "The city of {city} is not in {country}."),
            t("You can find {city} in {country}.", "You cannot find {city} in {country}."),
            t("{name} is the name of a country.", "{name} is not the name of a country."),
        ],
        rows,
    )
}

const COMPANIES: &[(&str, &str, &str)] = &[
    ("The Bank of Montreal", "Canada", "banking services"),
    ("Royal Bank of Canada", "Canada", "banking services"),
    ("HSBC", "the United Kingdom", "banking services"),
    ("Deutsche Bank", "Germany", "banking services"),
    ("BNP Paribas", "France", "banking services"),
    ("Santander", "Spain", "banking services"),
    ("UBS", "Switzerland", "banking services"),
    ("Lowe's", "the United States", "retail services"),
    ("Walmart", "the United States", "retail services"),
    ("Costco", "the United States", "retail services"),
    ("Tesco", "the United Kingdom", "retail services"),
    ("Carrefour", "France", "retail services"),
    ("Aldi", "Germany", "retail services"),
    ("IKEA", "Sweden", "retail services"),
    ("Verizon", "the United States", "telecommunication services"),
    ("AT&T", "the United States", "telecommunication services"),
    ("Vodafone", "the United Kingdom", "telecommunication services"),
    ("Deutsche Telekom", "Germany", "telecommunication services"),
    ("Telefonica", "Spain", "telecommunication services"),
    ("NTT", "Japan", "telecommunication services"),
    ("Swisscom", "Switzerland", "telecommunication services"),
    ("Microsoft", "the United States", "software products"),
    ("Oracle", "the United States", "software products"),
    ("SAP", "Germany", "software products"),
    ("Adobe", "the United States", "software products"),
    ("Dassault Systemes", "France", "software products"),
    ("Infosys", "India", "information technology services"),
    ("Wipro", "India", "information technology services"),
    ("Tata Consultancy Services", "India", "information technology services"),
    ("Capgemini", "France", "information technology services"),
    ("Toyota", "Japan", "automotive products"),
    ("Honda", "Japan", "automotive products"),
    ("Volkswagen", "Germany", "automotive products"),
    ("BMW", "Germany", "automotive products"),
    ("Ford", "the United States", "automotive products"),
    ("Hyundai", "South Korea", "automotive products"),
    ("Renault", "France", "automotive products"),
    ("Ferrari", "Italy", "automotive products"),
    ("Volvo Cars", "Sweden", "automotive products"),
    ("Pfizer", "the United States", "pharmaceutical products"),
    ("Novartis", "Switzerland", "pharmaceutical products"),
    ("Roche", "Switzerland", "pharmaceutical products"),
    ("Bayer", "Germany", "pharmaceutical products"),
    ("Sanofi", "France", "pharmaceutical products"),
    ("AstraZeneca", "the United Kingdom", "pharmaceutical products"),
    ("Takeda", "Japan", "pharmaceutical products"),
    ("Shell", "the United Kingdom", "energy products"),
    ("BP", "the United Kingdom", "energy products"),
    ("ExxonMobil", "the United States", "energy products"),
    ("TotalEnergies", "France", "energy products"),
    ("Equinor", "Norway", "energy products"),
    ("Petrobras", "Brazil", "energy products"),
    ("Saudi Aramco", "Saudi Arabia", "energy products"),
    ("Delta Air Lines", "the United States", "air transport services"),
    ("Lufthansa", "Germany", "air transport services"),
    ("Air France", "France", "air transport services"),
    ("Qantas", "Australia", "air transport services"),
    ("Emirates", "the United Arab Emirates", "air transport services"),
    ("Air Canada", "Canada", "air transport services"),
    ("Sony", "Japan", "consumer electronics"),
    ("Samsung", "South Korea", "consumer electronics"),
    ("Panasonic", "Japan", "consumer electronics"),
    ("Philips", "the Netherlands", "consumer electronics"),
    ("LG", "South Korea", "consumer electronics"),
    ("Nestle", "Switzerland", "food and beverage products"),
    ("Danone", "France", "food and beverage products"),
    ("Coca-Cola", "the United States", "food and beverage products"),
    ("PepsiCo", "the United States", "food and beverage products"),
    ("Heineken", "the Netherlands", "food and beverage products"),
    ("Allianz", "Germany", "insurance services"),
    ("AXA", "France", "insurance services"),
    ("Aviva", "the United Kingdom", "insurance services"),
    ("Zurich Insurance", "Switzerland", "insurance services"),
    ("Netflix", "the United States", "entertainment services"),
];

pub fn companies() -> TemplateTable {
    let hq: Vec<(&str, &str)> = COMPANIES.iter().map(|(c, k, _)| (*c, *k)).collect();
    let svc: Vec<(&str, &str)> = COMPANIES.iter().map(|(c, _, s)| (*c, *s)).collect();
    let mut rows = relation("company", "country", &hq);
    pin(&mut rows, &[("company", "The Bank of Montreal"), ("country", "Canada")]);
    let mut services = relation("company", "service", &svc);
    pin(
        &mut services,
        &[("company", "Lowe's"), ("service", "telecommunication services")],
    );
    rows.extend(services);
    TemplateTable::new(
        "Companies",
        vec![
            t(
                "{company} has headquarters in {country}.",
                "{company} does not have headquarters in {country}.",
            ),
            t(
                "{company} is headquartered in {country}.",
                "{company} is not headquartered in {country}.",
            ),
            t(
                "The headquarters of {company} are in {country}.",
                "The headquarters of {company} are not in {country}.",
            ),
            t(
                "{company} engages in the provision of {service}.",
                "{company} does not engage in the provision of {service}.",
            ),
            t(
                "{company} is a provider of {service}.",
                "{company} is not a provider of {service}.",
            ),
        ],
        rows,
    )
}

const ELEMENTS: &[(&str, &str)] = &[
    ("Hydrogen", "H"),
    ("Helium", "He"),
    ("Lithium", "Li"),
    ("Beryllium", "Be"),
    ("Boron", "B"),
    ("Carbon", "C"),
    ("Nitrogen", "N"),
    ("Oxygen", "O"),
    ("Fluorine", "F"),
    ("Neon", "Ne"),
    ("Sodium", "Na"),
    ("Magnesium", "Mg"),
    ("Aluminium", "Al"),
    ("Silicon", "Si"),
    ("Phosphorus", "P"),
    ("Sulfur", "S"),
    ("Chlorine", "Cl"),
    ("Argon", "Ar"),
    ("Potassium", "K"),
    ("Calcium", "Ca"),
    ("Scandium", "Sc"),
    ("Titanium", "Ti"),
    ("Vanadium", "V"),
    ("Chromium", "Cr"),
    ("Manganese", "Mn"),
    ("Iron", "Fe"),
    ("Cobalt", "Co"),
    ("Nickel", "Ni"),
    ("Copper", "Cu"),
    ("Zinc", "Zn"),
    ("Gallium", "Ga"),
    ("Germanium", "Ge"),
    ("Arsenic", "As"),
    ("Selenium", "Se"),
    ("Bromine", "Br"),
    ("Krypton", "Kr"),
    ("Rubidium", "Rb"),
    ("Strontium", "Sr"),
    ("Yttrium", "Y"),
    ("Zirconium", "Zr"),
    ("Niobium", "Nb"),
    ("Molybdenum", "Mo"),
    ("Technetium", "Tc"),
    ("Ruthenium", "Ru"),
    ("Rhodium", "Rh"),
    ("Palladium", "Pd"),
    ("Silver", "Ag"),
    ("Cadmium", "Cd"),
    ("Indium", "In"),
    ("Tin", "Sn"),
    ("Antimony", "Sb"),
    ("Tellurium", "Te"),
    ("Iodine", "I"),
    ("Xenon", "Xe"),
    ("Caesium", "Cs"),
    ("Barium", "Ba"),
    ("Lanthanum", "La"),
    ("Cerium", "Ce"),
    ("Praseodymium", "Pr"),
    ("Neodymium", "Nd"),
    ("Promethium", "Pm"),
    ("Samarium", "Sm"),
    ("Europium", "Eu"),
    ("Gadolinium", "Gd"),
    ("Terbium", "Tb"),
    ("Dysprosium", "Dy"),
    ("Holmium", "Ho"),
    ("Erbium", "Er"),
    ("Thulium", "Tm"),
    ("Ytterbium", "Yb"),
    ("Lutetium", "Lu"),
    ("Hafnium", "Hf"),
    ("Tantalum", "Ta"),
    ("Tungsten", "W"),
    ("Rhenium", "Re"),
    ("Osmium", "Os"),
    ("Iridium", "Ir"),
    ("Platinum", "Pt"),
    ("Gold", "Au"),
    ("Mercury", "Hg"),
    ("Thallium", "Tl"),
    ("Lead", "Pb"),
    ("Bismuth", "Bi"),
    ("Polonium", "Po"),
    ("Astatine", "At"),
    ("Radon", "Rn"),
];

const GASES: &[&str] = &[
    "Hydrogen", "Helium", "Nitrogen", "Oxygen", "Fluorine", "Neon", "Chlorine", "Argon", "Krypton", "Xenon", "Radon",
];
const LIQUIDS: &[&str] = &["Bromine", "Mercury"];

pub fn elements() -> TemplateTable {
    let numbers: Vec<String> = (1..=ELEMENTS.len()).map(|z| z.to_string()).collect();
    let by_number: Vec<(&str, &str)> = ELEMENTS
        .iter()
        .zip(&numbers)
        .map(|((name, _), z)| (*name, z.as_str()))
        .collect();
    let states: Vec<(&str, &str)> = ELEMENTS
        .iter()
        .map(|(name, _)| {
            let state = if GASES.contains(name) {
                "gas"
            } else if LIQUIDS.contains(name) {
                "liquid"
            } else {
                "solid"
            };
            (*name, state)
        })
        .collect();
    // Wrong atomic numbers and symbols are drawn from nearby elements only.
    let position = |name: &str| ELEMENTS.iter().position(|(n, _)| *n == name).unwrap_or(0);
    let near = |a: &str, b: &str, lookup: &dyn Fn(&str) -> usize| position(a).abs_diff(lookup(b)) > 6;
    let number_of = |z: &str| z.parse::<usize>().map_or(0, |z| z - 1);
    let symbol_of = |s: &str| ELEMENTS.iter().position(|(_, sym)| *sym == s).unwrap_or(0);

    let mut rows = relation_filtered("element", "number", &by_number, |e, z| near(e, z, &number_of));
    pin(&mut rows, &[("element", "Scandium"), ("number", "21")]);
    let mut state_rows = relation("element", "state", &states);
    pin(&mut state_rows, &[("element", "Thallium"), ("state", "liquid")]);
    rows.extend(state_rows);
    rows.extend(relation_filtered("element", "symbol", ELEMENTS, |e, s| {
        near(e, s, &symbol_of)
    }));
    TemplateTable::new(
        "Elements",
        vec![
            t(
                "{element} has the atomic number of {number}.",
                "{element} does not have the atomic number of {number}.",
            ),
            t(
                "The atomic number of {element} is {number}.",
                "The atomic number of {element} is not {number}.",
            ),
            t(
                "{element} appears in its standard state as {state}.",
                "{element} does not appear in its standard state as {state}.",
            ),
            t(
                "The chemical symbol for {element} is {symbol}.",
                "The chemical symbol for {element} is not {symbol}.",
            ),
        ],
        rows,
    )
}

/// (animal, habitat, locomotion, class, diet)
const ANIMALS: &[(&str, &str, &str, &str, &str)] = &[
    ("giant anteater", "grassland", "walking", "mammal", "insectivorous"),
    ("hyena", "grassland", "walking", "mammal", "carnivorous"),
    ("lion", "grassland", "walking", "mammal", "carnivorous"),
    ("zebra", "grassland", "walking", "mammal", "herbivorous"),
    ("giraffe", "grassland", "walking", "mammal", "herbivorous"),
    ("elephant", "grassland", "walking", "mammal", "herbivorous"),
    ("cheetah", "grassland", "walking", "mammal", "carnivorous"),
    ("kangaroo", "grassland", "hopping", "mammal", "herbivorous"),
    ("bison", "grassland", "walking", "mammal", "herbivorous"),
    ("ostrich", "grassland", "walking", "bird", "omnivorous"),
    ("honeybee", "grassland", "flying", "insect", "herbivorous"),
    ("monarch butterfly", "grassland", "flying", "insect", "herbivorous"),
    ("grasshopper", "grassland", "hopping", "insect", "herbivorous"),
    ("camel", "desert", "walking", "mammal", "herbivorous"),
    ("fennec fox", "desert", "walking", "mammal", "omnivorous"),
    ("meerkat", "desert", "walking", "mammal", "insectivorous"),
    ("scorpion", "desert", "walking", "arachnid", "carnivorous"),
    ("rattlesnake", "desert", "slithering", "reptile", "carnivorous"),
    ("gila monster", "desert", "walking", "reptile", "carnivorous"),
    ("roadrunner", "desert", "walking", "bird", "carnivorous"),
    ("polar bear", "polar", "walking", "mammal", "carnivorous"),
    ("emperor penguin", "polar", "swimming", "bird", "carnivorous"),
    ("walrus", "polar", "swimming", "mammal", "carnivorous"),
    ("arctic fox", "polar", "walking", "mammal", "carnivorous"),
    ("snowy owl", "polar", "flying", "bird", "carnivorous"),
    ("dolphin", "marine", "swimming", "mammal", "carnivorous"),
    ("blue whale", "marine", "swimming", "mammal", "carnivorous"),
    ("great white shark", "marine", "swimming", "fish", "carnivorous"),
    ("octopus", "marine", "swimming", "mollusc", "carnivorous"),
    ("sea turtle", "marine", "swimming", "reptile", "omnivorous"),
    ("clownfish", "marine", "swimming", "fish", "omnivorous"),
    ("seahorse", "marine", "swimming", "fish", "carnivorous"),
    ("albatross", "marine", "flying", "bird", "carnivorous"),
    ("trout", "freshwater", "swimming", "fish", "carnivorous"),
    ("pike", "freshwater", "swimming", "fish", "carnivorous"),
    ("catfish", "freshwater", "swimming", "fish", "omnivorous"),
    ("piranha", "freshwater", "swimming", "fish", "carnivorous"),
    ("hippopotamus", "freshwater", "walking", "mammal", "herbivorous"),
    ("river otter", "freshwater", "swimming", "mammal", "carnivorous"),
    ("beaver", "freshwater", "swimming", "mammal", "herbivorous"),
    ("platypus", "freshwater", "swimming", "mammal", "carnivorous"),
    ("crocodile", "freshwater", "swimming", "reptile", "carnivorous"),
    ("frog", "freshwater", "hopping", "amphibian", "insectivorous"),
    ("axolotl", "freshwater", "swimming", "amphibian", "carnivorous"),
    ("gorilla", "forest", "walking", "mammal", "herbivorous"),
    ("chimpanzee", "forest", "walking", "mammal", "omnivorous"),
    ("orangutan", "forest", "climbing", "mammal", "herbivorous"),
    ("sloth", "forest", "climbing", "mammal", "herbivorous"),
    ("koala", "forest", "climbing", "mammal", "herbivorous"),
    ("jaguar", "forest", "walking", "mammal", "carnivorous"),
    ("tiger", "forest", "walking", "mammal", "carnivorous"),
    ("toucan", "forest", "flying", "bird", "omnivorous"),
    ("woodpecker", "forest", "flying", "bird", "insectivorous"),
    ("brown bear", "forest", "walking", "mammal", "omnivorous"),
    ("red fox", "forest", "walking", "mammal", "omnivorous"),
    ("deer", "forest", "walking", "mammal", "herbivorous"),
    ("python", "forest", "slithering", "reptile", "carnivorous"),
    ("chameleon", "forest", "climbing", "reptile", "insectivorous"),
    ("bat", "forest", "flying", "mammal", "insectivorous"),
    ("giant panda", "forest", "walking", "mammal", "herbivorous"),
    ("mountain goat", "mountain", "climbing", "mammal", "herbivorous"),
    ("snow leopard", "mountain", "walking", "mammal", "carnivorous"),
    ("yak", "mountain", "walking", "mammal", "herbivorous"),
    ("golden eagle", "mountain", "flying", "bird", "carnivorous"),
    ("condor", "mountain", "flying", "bird", "carnivorous"),
    ("llama", "mountain", "walking", "mammal", "herbivorous"),
];

pub fn animals() -> TemplateTable {
    let project = |f: fn(&(&'static str, &'static str, &'static str, &'static str, &'static str)) -> &'static str| {
        ANIMALS.iter().map(|a| (a.0, f(a))).collect::<Vec<_>>()
    };
    let mut rows = relation("animal", "habitat", &project(|a| a.1));
    pin(&mut rows, &[("animal", "hyena"), ("habitat", "freshwater")]);
    let mut moving = relation("animal", "locomotion", &project(|a| a.2));
    pin(&mut moving, &[("animal", "giant anteater"), ("locomotion", "walking")]);
    rows.extend(moving);
    rows.extend(relation("animal", "class", &project(|a| a.3)));
    rows.extend(relation("animal", "diet", &project(|a| a.4)));
    TemplateTable::new(
        "Animals",
        vec![
            t(
                "The {animal} has a {habitat} habitat.",
                "The {animal} does not have a {habitat} habitat.",
            ),
            t(
                "The {animal} uses {locomotion} for locomotion.",
                "The {animal} does not use {locomotion} for locomotion.",
            ),
            t("The {animal} is a {class}.", "The {animal} is not a {class}."),
            t(
                "The {animal} has a {diet} diet.",
                "The {animal} does not have a {diet} diet.",
            ),
        ],
        rows,
    )
}

const ORBITS: &[(&str, &str)] = &[
    ("The earth", "the sun"),
    ("Mercury", "the sun"),
    ("Venus", "the sun"),
    ("Mars", "the sun"),
    ("Jupiter", "the sun"),
    ("Saturn", "the sun"),
    ("Uranus", "the sun"),
    ("Neptune", "the sun"),
    ("Pluto", "the sun"),
    ("Ceres", "the sun"),
    ("Halley's Comet", "the sun"),
    ("Phobos", "Mars"),
    ("Deimos", "Mars"),
    ("Io", "Jupiter"),
    ("Europa", "Jupiter"),
    ("Ganymede", "Jupiter"),
    ("Callisto", "Jupiter"),
    ("Titan", "Saturn"),
    ("Enceladus", "Saturn"),
    ("Rhea", "Saturn"),
    ("Miranda", "Uranus"),
    ("Titania", "Uranus"),
    ("Oberon", "Uranus"),
    ("Triton", "Neptune"),
    ("Charon", "Pluto"),
];

const UNITS: &[(&str, &str)] = &[
    ("Force", "newtons"),
    ("Energy", "joules"),
    ("Power", "watts"),
    ("Electric current", "amperes"),
    ("Voltage", "volts"),
    ("Electrical resistance", "ohms"),
    ("Frequency", "hertz"),
    ("Pressure", "pascals"),
    ("Thermodynamic temperature", "kelvins"),
    ("Mass", "kilograms"),
    ("Length", "meters"),
    ("Time", "seconds"),
    ("Electric charge", "coulombs"),
    ("Capacitance", "farads"),
    ("Magnetic flux", "webers"),
    ("Inductance", "henries"),
    ("Luminous intensity", "candelas"),
    ("Amount of substance", "moles"),
    ("Radioactivity", "becquerels"),
    ("Absorbed radiation dose", "grays"),
    ("Magnetic flux density", "teslas"),
    ("Electrical conductance", "siemens"),
    ("Illuminance", "lux"),
    ("Plane angle", "radians"),
];

const COMPOUNDS: &[(&str, &str)] = &[
    ("Water", "hydrogen and oxygen"),
    ("Table salt", "sodium and chlorine"),
    ("Carbon dioxide", "carbon and oxygen"),
    ("Carbon monoxide", "carbon and oxygen"),
    ("Methane", "carbon and hydrogen"),
    ("Ammonia", "nitrogen and hydrogen"),
    ("Rust", "iron and oxygen"),
    ("Quartz", "silicon and oxygen"),
    ("Hydrogen chloride", "hydrogen and chlorine"),
    ("Hydrogen sulfide", "hydrogen and sulfur"),
    ("Sulfur dioxide", "sulfur and oxygen"),
    ("Nitrous oxide", "nitrogen and oxygen"),
    ("Quicklime", "calcium and oxygen"),
    ("Magnesium oxide", "magnesium and oxygen"),
    ("Zinc sulfide", "zinc and sulfur"),
    ("Silver chloride", "silver and chlorine"),
    ("Potassium chloride", "potassium and chlorine"),
    ("Lithium hydride", "lithium and hydrogen"),
    ("Copper oxide", "copper and oxygen"),
    ("Alumina", "aluminium and oxygen"),
];

const DISEASES: &[(&str, &str)] = &[
    ("Influenza", "virus"),
    ("Measles", "virus"),
    ("Chickenpox", "virus"),
    ("Rabies", "virus"),
    ("Polio", "virus"),
    ("Smallpox", "virus"),
    ("Mumps", "virus"),
    ("Rubella", "virus"),
    ("Dengue fever", "virus"),
    ("Yellow fever", "virus"),
    ("Ebola", "virus"),
    ("Tuberculosis", "bacterium"),
    ("Cholera", "bacterium"),
    ("Tetanus", "bacterium"),
    ("Typhoid", "bacterium"),
    ("Leprosy", "bacterium"),
    ("Anthrax", "bacterium"),
    ("Syphilis", "bacterium"),
    ("Diphtheria", "bacterium"),
    ("Whooping cough", "bacterium"),
    ("Malaria", "parasite"),
    ("Sleeping sickness", "parasite"),
    ("Toxoplasmosis", "parasite"),
    ("Leishmaniasis", "parasite"),
    ("Ringworm", "fungus"),
    ("Athlete's foot", "fungus"),
    ("Thrush", "fungus"),
    ("Valley fever", "fungus"),
];

const ORGANS: &[(&str, &str)] = &[
    ("the heart", "pump blood"),
    ("the lungs", "exchange gases"),
    ("the kidneys", "filter blood"),
    ("the stomach", "digest food"),
    ("the bladder", "store urine"),
    ("the eyes", "detect light"),
    ("the ears", "detect sound"),
    ("red blood cells", "carry oxygen"),
    ("white blood cells", "fight infection"),
    ("platelets", "clot blood"),
    ("the gallbladder", "store bile"),
    ("the small intestine", "absorb nutrients"),
    ("the large intestine", "absorb water"),
    ("the trachea", "carry air to the lungs"),
    ("the spinal cord", "transmit nerve signals"),
    ("the cornea", "focus light"),
];

const PLANET_ORDER: &[(&str, &str)] = &[
    ("Mercury", "first"),
    ("Venus", "second"),
    ("The earth", "third"),
    ("Mars", "fourth"),
    ("Jupiter", "fifth"),
    ("Saturn", "sixth"),
    ("Uranus", "seventh"),
    ("Neptune", "eighth"),
];

const PROCESSES: &[(&str, &str)] = &[
    ("Photosynthesis", "chloroplast"),
    ("Cellular respiration", "mitochondrion"),
    ("Protein synthesis", "ribosome"),
    ("Transcription", "nucleus"),
    ("Glycolysis", "cytoplasm"),
];

const PHASE_CHANGES: &[(&str, &str)] = &[
    ("Melting", "solid to liquid"),
    ("Freezing", "liquid to solid"),
    ("Boiling", "liquid to gas"),
    ("Condensation", "gas to liquid"),
    ("Sublimation", "solid to gas"),
    ("Deposition", "gas to solid"),
];

const ACIDITY: &[(&str, &str)] = &[
    ("Vinegar", "an acid"),
    ("Lemon juice", "an acid"),
    ("Sulfuric acid", "an acid"),
    ("Hydrochloric acid", "an acid"),
    ("Citric acid", "an acid"),
    ("Tomato juice", "an acid"),
    ("Battery acid", "an acid"),
    ("Bleach", "a base"),
    ("Baking soda", "a base"),
    ("Soap", "a base"),
    ("Lye", "a base"),
    ("Milk of magnesia", "a base"),
    ("Ammonia solution", "a base"),
    ("Seawater", "a base"),
];

const KINGDOMS: &[(&str, &str)] = &[
    ("Mushrooms", "fungus"),
    ("Yeasts", "fungus"),
    ("Molds", "fungus"),
    ("Oak trees", "plant"),
    ("Ferns", "plant"),
    ("Mosses", "plant"),
    ("Sunflowers", "plant"),
    ("Jellyfish", "animal"),
    ("Sponges", "animal"),
    ("Earthworms", "animal"),
    ("Humans", "animal"),
];

const VITAMINS: &[(&str, &str)] = &[
    ("C", "scurvy"),
    ("D", "rickets"),
    ("B1", "beriberi"),
    ("B3", "pellagra"),
    ("A", "night blindness"),
    ("B12", "pernicious anemia"),
];

const INSTRUMENTS: &[(&str, &str)] = &[
    ("thermometer", "temperature"),
    ("barometer", "air pressure"),
    ("seismometer", "ground motion"),
    ("ammeter", "electric current"),
    ("voltmeter", "voltage"),
    ("hygrometer", "humidity"),
    ("anemometer", "wind speed"),
    ("odometer", "distance traveled"),
    ("speedometer", "speed"),
    ("altimeter", "altitude"),
    ("hydrometer", "liquid density"),
    ("photometer", "light intensity"),
];

const MOONS_OF: &[&str] = &["Mars", "Jupiter", "Saturn", "Uranus", "Neptune", "Pluto"];

pub fn facts() -> TemplateTable {
    // A moon orbiting its planet also travels around the sun; such claims
    // are neither clearly true nor false, so they are not generated.
    let moon = |body: &str| ORBITS.iter().any(|(b, c)| *b == body && MOONS_OF.contains(c));
    let mut rows = relation_filtered("body", "center", ORBITS, |b, c| {
        (moon(b) && c == "the sun") || b.eq_ignore_ascii_case(c)
    });
    pin(&mut rows, &[("body", "The earth"), ("center", "the sun")]);
    rows.extend(relation("quantity", "unit", UNITS));
    rows.extend(relation("compound", "elements", COMPOUNDS));
    rows.extend(relation("disease", "pathogen", DISEASES));
    rows.extend(relation("organ", "function", ORGANS));
    rows.extend(relation("planet", "ordinal", PLANET_ORDER));
    rows.extend(relation("process", "organelle", PROCESSES));
    rows.extend(relation("process_name", "change", PHASE_CHANGES));
    rows.extend(relation("substance", "kind", ACIDITY));
    rows.extend(relation("organism", "kingdom", KINGDOMS));
    rows.extend(relation("vitamin", "deficiency", VITAMINS));
    rows.extend(relation("instrument", "measured", INSTRUMENTS));
    TemplateTable::new(
        "Facts",
        vec![
            t("{body} orbits {center}.", "{body} doesn't orbit {center}."),
            t(
                "{body} revolves around {center}.",
                "{body} does not revolve around {center}.",
            ),
            t("{quantity} is measured in {unit}.", "{quantity} is not measured in {unit}."),
            t(
                "{quantity} is expressed in units of {unit}.",
                "{quantity} is not expressed in units of {unit}.",
            ),
            t("{compound} is composed of {elements}.", "{compound} is not composed of {elements}."),
            t("{compound} consists of {elements}.", "{compound} does not consist of {elements}."),
            t("{disease} is caused by a {pathogen}.", "{disease} is not caused by a {pathogen}."),
            t(
                "{disease} is an illness caused by a {pathogen}.",
                "{disease} is not an illness caused by a {pathogen}.",
            ),
            t(
                "The main function of {organ} is to {function}.",
                "The main function of {organ} is not to {function}.",
            ),
            t(
                "{planet} is the {ordinal} planet from the sun.",
                "{planet} is not the {ordinal} planet from the sun.",
            ),
            t(
                "{process} takes place in the {organelle}.",
                "{process} does not take place in the {organelle}.",
            ),
            t(
                "{process_name} is the transition from {change}.",
                "{process_name} is not the transition from {change}.",
            ),
            t("{substance} is classified as {kind}.", "{substance} is not classified as {kind}."),
            t(
                "{organism} belong to the {kingdom} kingdom.",
                "{organism} do not belong to the {kingdom} kingdom.",
            ),
            t(
                "A lack of vitamin {vitamin} causes {deficiency}.",
                "A lack of vitamin {vitamin} does not cause {deficiency}.",
            ),
            t(
                "A {instrument} is used to measure {measured}.",
                "A {instrument} is not used to measure {measured}.",
            ),
        ],
        rows,
    )
}

const INVENTIONS: &[(&str, &str)] = &[
    ("Ernesto Blanco", "electric wheelchair"),
    ("Alan Turing", "Turing machine"),
    ("Edmund Cartwright", "power loom"),
    ("Thomas Edison", "phonograph"),
    ("Alexander Graham Bell", "telephone"),
    ("Johannes Gutenberg", "printing press"),
    ("Samuel Morse", "electric telegraph"),
    ("Orville Wright", "airplane"),
    ("Karl Benz", "automobile"),
    ("Rudolf Diesel", "diesel engine"),
    ("Nikola Tesla", "induction motor"),
    ("Guglielmo Marconi", "radio"),
    ("John Logie Baird", "mechanical television"),
    ("Tim Berners-Lee", "World Wide Web"),
    ("Eli Whitney", "cotton gin"),
    ("Elisha Otis", "safety elevator"),
    ("Benjamin Franklin", "lightning rod"),
    ("Hans Lippershey", "telescope"),
    ("Alessandro Volta", "voltaic pile"),
    ("Willis Carrier", "air conditioner"),
    ("Percy Spencer", "microwave oven"),
    ("Charles Babbage", "difference engine"),
    ("Blaise Pascal", "mechanical calculator"),
    ("Louis Braille", "braille system"),
    ("Whitcomb Judson", "zipper"),
    ("King Camp Gillette", "safety razor"),
    ("Christopher Sholes", "typewriter"),
    ("Robert Goddard", "liquid-fueled rocket"),
    ("Igor Sikorsky", "helicopter"),
    ("Frank Whittle", "jet engine"),
    ("Jacques Cousteau", "aqualung"),
    ("Ruth Wakefield", "chocolate chip cookie"),
    ("Mary Anderson", "windshield wiper"),
    ("Josephine Cochrane", "dishwasher"),
    ("Garrett Morgan", "three-position traffic signal"),
    ("George de Mestral", "hook-and-loop fastener"),
    ("Earl Dickson", "adhesive bandage"),
    ("Laszlo Biro", "ballpoint pen"),
    ("Walter Hunt", "safety pin"),
    ("Alfred Nobel", "dynamite stick"),
    ("Samuel Colt", "revolver"),
    ("Richard Gatling", "Gatling gun"),
    ("Hiram Maxim", "automatic machine gun"),
    ("Philo Farnsworth", "electronic television"),
    ("Cyrus McCormick", "mechanical reaper"),
    ("John Deere", "steel plow"),
    ("Elias Howe", "lockstitch sewing machine"),
    ("Jack Kilby", "integrated circuit"),
    ("Martin Cooper", "handheld mobile phone"),
    ("Steven Sasson", "digital camera"),
    ("Douglas Engelbart", "computer mouse"),
    ("Dean Kamen", "Segway"),
    ("Art Fry", "Post-it note"),
    ("James Dyson", "bagless vacuum cleaner"),
    ("Arthur Wynne", "crossword puzzle"),
    ("Evangelista Torricelli", "mercury barometer"),
    ("Daniel Fahrenheit", "mercury thermometer"),
    ("Christiaan Huygens", "pendulum clock"),
    ("Charles Kettering", "electric self-starter"),
    ("Otto Lilienthal", "hang glider"),
    ("Edwin Land", "instant camera"),
    ("Lonnie Johnson", "Super Soaker"),
    ("Sylvan Goldman", "shopping cart"),
    ("Zacharias Janssen", "compound microscope"),
    ("Charles Goodyear", "vulcanization process"),
    ("Thomas Newcomen", "atmospheric steam engine"),
];

pub fn inventions() -> TemplateTable {
    let mut rows = relation("inventor", "invention", INVENTIONS);
    pin(&mut rows, &[("inventor", "Ernesto Blanco"), ("invention", "electric wheelchair")]);
    pin(&mut rows, &[("inventor", "Alan Turing"), ("invention", "power loom")]);
    TemplateTable::new(
        "Inventions",
        vec![
            t("{inventor} invented the {invention}.", "{inventor} did not invent the {invention}."),
            t(
                "The {invention} was invented by {inventor}.",
                "The {invention} was not invented by {inventor}.",
            ),
            t(
                "{inventor} is credited with inventing the {invention}.",
                "{inventor} is not credited with inventing the {invention}.",
            ),
            t(
                "The inventor of the {invention} is {inventor}.",
                "The inventor of the {invention} is not {inventor}.",
            ),
        ],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_table_supports_five_hundred_balanced_statements() {
        for table in all() {
            let c = table.candidates();
            let trues = c.iter().filter(|c| c.label).count();
            let falses = c.len() - trues;
            assert!(trues >= 250, "{}: only {trues} true fills", table.name);
            assert!(falses >= 250, "{}: only {falses} false fills", table.name);
        }
    }

    #[test]
    fn exemplar_sentences_and_labels() {
        let expect = [
            ("Animals", "The giant anteater uses walking for locomotion.", true),
            ("Animals", "The hyena has a freshwater habitat.", false),
            ("Cities", "Tripoli is a city in Libya.", true),
            ("Cities", "Rome is the name of a country.", false),
            ("Companies", "The Bank of Montreal has headquarters in Canada.", true),
            ("Companies", "Lowe's engages in the provision of telecommunication services.", false),
            ("Elements", "Scandium has the atomic number of 21.", true),
            ("Elements", "Thallium appears in its standard state as liquid.", false),
            ("Facts", "The earth orbits the sun.", true),
            ("Inventions", "Ernesto Blanco invented the electric wheelchair.", true),
            ("Inventions", "Alan Turing invented the power loom.", false),
        ];
        for (table, text, label) in expect {
            let c = by_name(table).unwrap().candidates();
            let hit = c.iter().find(|c| c.text == text).unwrap_or_else(|| panic!("missing {text}"));
            assert_eq!(hit.label, label, "{text}");
            assert!(hit.pinned, "{text} should be pinned");
        }
    }

    #[test]
    fn moons_are_never_claimed_false_about_the_sun() {
        let c = facts().candidates();
        assert!(!c.iter().any(|c| c.text == "Titan orbits the sun."));
        assert!(c.iter().any(|c| c.text == "Titan orbits Jupiter." && !c.label));
    }

    #[test]
    fn pins_never_exceed_one_per_label_per_table() {
        for table in all() {
            let c = table.candidates();
            for label in [true, false] {
                let n = c.iter().filter(|c| c.pinned && c.label == label).count();
                assert!(n <= 1, "{}: {n} pinned with label {label}", table.name);
            }
        }
    }
}
