use proptest::prelude::*;
use protoagent_core::protocol::{render_simplified_tree, validate_syntax, SyntaxOptions};
use protoagent_core::testing::{random_document, random_value, GeneratorConfig};
use protoagent_core::{
    parse_protocol, serialize_protocol, Action, EditError, EditOptions, ProtocolDocument, RuleSet,
    Toolset, Vocabulary,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

fn doc_from(seed: u64) -> (ProtocolDocument, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let doc = random_document(&mut rng, &GeneratorConfig::default());
    (doc, rng)
}

fn toolset() -> Toolset {
    // Random documents carry unregistered essentials, so stay permissive.
    Toolset::new(
        Vocabulary::builtin(),
        RuleSet::builtin(),
        EditOptions::default(),
    )
}

fn empty_compounds(doc: &ProtocolDocument, rules: &RuleSet) -> Vec<String> {
    doc.entities()
        .filter(|e| rules.is_compound(&e.entity_type) && e.children.is_empty())
        .map(|e| e.id.clone())
        .collect()
}

fn non_root_ids(doc: &ProtocolDocument) -> Vec<String> {
    doc.entities().skip(1).map(|e| e.id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn round_trip_and_idempotence(seed in any::<u64>()) {
        let (doc, _) = doc_from(seed);
        let text = serialize_protocol(&doc);
        let back = parse_protocol(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(serialize_protocol(&back), text.clone());
        prop_assert!(text.ends_with('\n'));
        prop_assert!(validate_syntax(&text, &SyntaxOptions::default()).ok);
    }

    #[test]
    fn serialization_is_a_function_of_structure(seed in any::<u64>()) {
        let (a, _) = doc_from(seed);
        let (b, _) = doc_from(seed);
        prop_assert_eq!(serialize_protocol(&a), serialize_protocol(&b));
    }

    #[test]
    fn tree_line_count_equals_entity_count(seed in any::<u64>()) {
        let (doc, _) = doc_from(seed);
        let text = serialize_protocol(&doc);
        let lines = render_simplified_tree(&doc).lines.len();
        prop_assert_eq!(lines, 1 + text.matches("<Entity ").count());
    }

    #[test]
    fn cascade_leaves_no_empty_compound(seed in any::<u64>()) {
        let (doc, mut rng) = doc_from(seed);
        let rules = RuleSet::builtin();
        prop_assume!(empty_compounds(&doc, &rules).is_empty());
        let ids = non_root_ids(&doc);
        prop_assume!(!ids.is_empty());
        let target = ids.choose(&mut rng).unwrap();
        let parent = doc.parent_of(target).unwrap();
        let siblings = parent.children.len();
        let result = toolset().delete_entity(&doc, target).unwrap();
        prop_assert!(empty_compounds(&result.document, &rules).is_empty());
        if siblings >= 2 {
            prop_assert!(result.document.contains(&parent.id));
            prop_assert!(result.side_effects.is_empty());
        }
    }

    #[test]
    fn copies_never_duplicate_ids(seed in any::<u64>()) {
        let (doc, mut rng) = doc_from(seed);
        let ids: Vec<String> = doc.entities().map(|e| e.id.clone()).collect();
        // Permissive placement: pick pairs whose types carry no placement rule.
        let permissive = Toolset::new(Vocabulary::builtin(), RuleSet::default(), EditOptions::default());
        let template = ids.choose(&mut rng).unwrap();
        let parent = ids.choose(&mut rng).unwrap();
        prop_assume!(template != &doc.root.id);
        let result = permissive.add_entity_from_template(&doc, template, parent, &[], None).unwrap();
        let all: Vec<&str> = result.document.entities().map(|e| e.id.as_str()).collect();
        let unique: HashSet<&str> = all.iter().copied().collect();
        prop_assert_eq!(all.len(), unique.len());
        prop_assert_eq!(all.len(), doc.entity_count() + doc.entity(template).unwrap().count());
    }

    #[test]
    fn failing_action_lists_change_nothing(seed in any::<u64>(), fail_at in 0usize..4) {
        let (doc, mut rng) = doc_from(seed);
        let ids = non_root_ids(&doc);
        let mut actions = Vec::new();
        for _ in 0..3 {
            let Some(id) = ids.choose(&mut rng) else { break };
            actions.push(Action::SetEssential {
                entity_id: id.clone(),
                essential_name: format!("Added{}", rng.gen_range(0..1000)),
                new_value: random_value(&mut rng),
            });
        }
        let at = fail_at.min(actions.len());
        actions.insert(at, Action::DeleteEntity { entity_id: "no-such-entity".into() });
        let before = serialize_protocol(&doc);
        let err = toolset().apply_actions(&doc, &actions).unwrap_err();
        let failed_at = matches!(err, EditError::ActionFailed { index, .. } if index == at);
        prop_assert!(failed_at);
        prop_assert_eq!(serialize_protocol(&doc), before);
    }

    #[test]
    fn applied_documents_pass_syntax(seed in any::<u64>()) {
        let (doc, mut rng) = doc_from(seed);
        let ids = non_root_ids(&doc);
        prop_assume!(!ids.is_empty());
        let target = ids.choose(&mut rng).unwrap().clone();
        let actions = vec![
            Action::SetEssential {
                entity_id: target.clone(),
                essential_name: "Fresh".into(),
                new_value: random_value(&mut rng),
            },
            Action::DeleteEntity { entity_id: target },
        ];
        let result = toolset().apply_actions(&doc, &actions).unwrap();
        prop_assert!(validate_syntax(&serialize_protocol(&result.document), &SyntaxOptions::default()).ok);
    }

    #[test]
    fn set_essential_touches_one_leaf(seed in any::<u64>()) {
        let (doc, mut rng) = doc_from(seed);
        let with_essentials: Vec<(String, String)> = doc
            .entities()
            .flat_map(|e| e.essentials.iter().map(move |x| (e.id.clone(), x.name.clone())))
            .collect();
        prop_assume!(!with_essentials.is_empty());
        let (id, name) = with_essentials.choose(&mut rng).unwrap().clone();
        let old = doc.entity(&id).unwrap().essential(&name).unwrap().value.clone();
        let new_value = loop {
            let v = random_value(&mut rng);
            if v.value_type() == old.value_type() {
                break v;
            }
        };
        let out = toolset().set_essential(&doc, &id, &name, &new_value).unwrap();
        let before: Vec<_> = doc.entities().collect();
        let after: Vec<_> = out.entities().collect();
        prop_assert_eq!(before.len(), after.len());
        let mut changed = 0;
        for (b, a) in before.iter().zip(&after) {
            prop_assert_eq!(&b.id, &a.id);
            prop_assert_eq!(b.essentials.len(), a.essentials.len());
            changed += b.essentials.iter().zip(&a.essentials).filter(|(x, y)| x != y).count();
        }
        prop_assert_eq!(changed, usize::from(old != new_value));
    }
}
