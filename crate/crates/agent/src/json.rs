use serde_json::Value;

/// Pulls one JSON object out of a model reply. Tolerates code fences and
/// prose around the object.
pub(crate) fn extract_object(reply: &str) -> Result<Value, String> {
    let text = reply.trim();
    if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(text) {
        return Ok(v);
    }
    let (Some(start), Some(end)) = (text.find('{'), text.rfind('}')) else {
        return Err("reply contains no JSON object".into());
    };
    if end < start {
        return Err("reply contains no JSON object".into());
    }
    match serde_json::from_str::<Value>(&text[start..=end]) {
        Ok(v @ Value::Object(_)) => Ok(v),
        Ok(_) => Err("reply is not a JSON object".into()),
        Err(e) => Err(format!("reply is not valid JSON: {e}")),
    }
}
