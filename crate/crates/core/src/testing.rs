//! Seeded random protocol generation for property and acceptance tests.

use crate::protocol::{CompositeNode, Entity, ProtocolDocument, TypedValue, ValueType, ROOT_TYPE};
use rand::seq::SliceRandom;
use rand::Rng;

const LEAF_TYPES: &[&str] = &[
    "CTReconEntity",
    "AcquisitionUnitEntity",
    "PostProcessingEntity",
    "TopogramRangeEntity",
    "SpiralRangeEntity",
    "FrameOfReferenceEntity",
];
const COMPOUND_TYPES: &[&str] = &["StandardReconCompoundEntity", "OrientedReconCompoundEntity"];
const NAME_PARTS: &[&str] = &[
    "Thorax", "Br40", "Bl60", "Lung", "A&B", "<3D>", "\"MPR\"", "Ax", "1.0 mm", "Größe",
];

pub struct GeneratorConfig {
    pub max_entities: usize,
    pub max_depth: usize,
    pub max_children: usize,
    pub compound_probability: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            max_entities: 50,
            max_depth: 6,
            max_children: 4,
            compound_probability: 0.3,
        }
    }
}

/// A random document with unique ids where every compound entity has at
/// least one child.
pub fn random_document<R: Rng>(rng: &mut R, config: &GeneratorConfig) -> ProtocolDocument {
    let mut budget = rng.gen_range(1..=config.max_entities.max(1));
    let mut counter = 0usize;
    budget -= 1;
    let mut root = Entity::new("root", random_name(rng), ROOT_TYPE);
    root.essentials = random_essentials(rng);
    grow(rng, config, &mut root, 1, &mut budget, &mut counter);
    let mut doc = ProtocolDocument::new(root);
    if rng.gen_bool(0.3) {
        doc.source_name = Some(format!("upload-{}.xml", rng.gen_range(0..100)));
    }
    doc
}

fn grow<R: Rng>(
    rng: &mut R,
    config: &GeneratorConfig,
    parent: &mut Entity,
    depth: usize,
    budget: &mut usize,
    counter: &mut usize,
) {
    let wanted = rng.gen_range(0..=config.max_children);
    for _ in 0..wanted {
        if *budget == 0 {
            return;
        }
        *budget -= 1;
        *counter += 1;
        // A compound needs room for at least one child below it.
        let compound =
            depth < config.max_depth && *budget > 0 && rng.gen_bool(config.compound_probability);
        let entity_type = if compound {
            COMPOUND_TYPES.choose(rng).unwrap()
        } else {
            LEAF_TYPES.choose(rng).unwrap()
        };
        let mut child = Entity::new(format!("e{counter}"), random_name(rng), *entity_type);
        child.essentials = random_essentials(rng);
        if compound {
            *budget -= 1;
            *counter += 1;
            let mut first = Entity::new(format!("e{counter}"), random_name(rng), "CTReconEntity");
            first.essentials = random_essentials(rng);
            grow(rng, config, &mut first, depth + 2, budget, counter);
            child.children.push(first);
        }
        if depth < config.max_depth {
            grow(rng, config, &mut child, depth + 1, budget, counter);
        }
        parent.children.push(child);
    }
}

fn random_name<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..=3);
    (0..n)
        .map(|_| *NAME_PARTS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_essentials<R: Rng>(rng: &mut R) -> Vec<crate::protocol::Essential> {
    let n = rng.gen_range(0..=3);
    (0..n)
        .map(|i| crate::protocol::Essential::new(format!("Essential{i}"), random_value(rng)))
        .collect()
}

pub fn random_value<R: Rng>(rng: &mut R) -> TypedValue {
    match ValueType::ALL.choose(rng).unwrap() {
        ValueType::Decimal => {
            TypedValue::decimal(&format!("{:.2}", rng.gen_range(-100.0..100.0))).unwrap()
        }
        ValueType::Integer => {
            TypedValue::scalar(ValueType::Integer, rng.gen_range(-500..500).to_string()).unwrap()
        }
        ValueType::Boolean => {
            TypedValue::scalar(ValueType::Boolean, rng.gen_bool(0.5).to_string()).unwrap()
        }
        ValueType::String => TypedValue::scalar(ValueType::String, random_name(rng)).unwrap(),
        ValueType::EnumToken => TypedValue::enum_token(
            ["Br40", "Bl60", "FaceUpFeetFirst", "HeadToFeet"]
                .choose(rng)
                .unwrap(),
        )
        .unwrap(),
        ValueType::Composite => {
            let leaf = CompositeNode::text(
                "Position",
                ["Right", "Left", "Top", ""]
                    .choose(rng)
                    .unwrap()
                    .to_string(),
            );
            let nodes = if rng.gen_bool(0.5) {
                vec![CompositeNode::branch(
                    "PositionsWithCurrents",
                    vec![leaf, CompositeNode::text("Current", "35")],
                )]
            } else {
                vec![leaf]
            };
            TypedValue::composite(nodes).unwrap()
        }
    }
}
