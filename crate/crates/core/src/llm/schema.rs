use std::collections::HashMap;

use serde_json::{json, Map, Value as Json};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum FieldType {
    String,
    Integer,
    Number,
    Boolean,
    Array(Box<FieldType>),
}

impl FieldType {
    fn accepts(&self, v: &Json) -> bool {
        match self {
            FieldType::String => v.is_string(),
            FieldType::Integer => v.is_i64() || v.is_u64(),
            FieldType::Number => v.is_number(),
            FieldType::Boolean => v.is_boolean(),
            FieldType::Array(item) => v
                .as_array()
                .is_some_and(|xs| xs.iter().all(|x| item.accepts(x))),
        }
    }

    fn json_schema(&self) -> Json {
        match self {
            FieldType::String => json!({"type": "string"}),
            FieldType::Integer => json!({"type": "integer"}),
            FieldType::Number => json!({"type": "number"}),
            FieldType::Boolean => json!({"type": "boolean"}),
            FieldType::Array(item) => json!({"type": "array", "items": item.json_schema()}),
        }
    }

    fn describe(&self) -> String {
        match self {
            FieldType::String => "string".into(),
            FieldType::Integer => "integer".into(),
            FieldType::Number => "number".into(),
            FieldType::Boolean => "boolean".into(),
            FieldType::Array(item) => format!("array of {}", item.describe()),
        }
    }
}

/// Shape of a structured LLM output: a flat object with typed fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    id: String,
    fields: Vec<(String, FieldType)>,
    example: Json,
}

impl Schema {
    /// Fails if `example` does not validate against the fields.
    pub fn new(
        id: impl Into<String>,
        fields: Vec<(String, FieldType)>,
        example: Json,
    ) -> Result<Self> {
        let schema = Schema {
            id: id.into(),
            fields,
            example,
        };
        schema.validate(&schema.example)?;
        Ok(schema)
    }

    /// Object with a `topics` list of strings.
    pub fn research_area() -> Self {
        Schema::new(
            "ResearchArea",
            vec![("topics".into(), FieldType::Array(Box::new(FieldType::String)))],
            json!({"topics": ["effect handlers", "prompt engineering"]}),
        )
        .expect("built-in schema validates its example")
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn fields(&self) -> &[(String, FieldType)] {
        &self.fields
    }

    pub fn example(&self) -> &Json {
        &self.example
    }

    pub fn validate(&self, v: &Json) -> Result<()> {
        let fail = |msg: String| Error::SchemaValidation {
            schema: self.id.clone(),
            msg,
        };
        let obj = v
            .as_object()
            .ok_or_else(|| fail(format!("expected an object, got {v}")))?;
        for (name, ty) in &self.fields {
            match obj.get(name) {
                None => return Err(fail(format!("missing field `{name}`"))),
                Some(x) if !ty.accepts(x) => {
                    return Err(fail(format!("field `{name}` should be {}", ty.describe())))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = obj
            .keys()
            .find(|k| !self.fields.iter().any(|(n, _)| n == *k))
        {
            return Err(fail(format!("unexpected field `{extra}`")));
        }
        Ok(())
    }

    /// Parses raw model output and validates it.
    pub fn parse_output(&self, raw: &str) -> Result<Json> {
        let v: Json = serde_json::from_str(raw.trim()).map_err(|e| Error::SchemaValidation {
            schema: self.id.clone(),
            msg: format!("not valid JSON: {e}"),
        })?;
        self.validate(&v)?;
        Ok(v)
    }

    /// JSON Schema document used for schema-constrained requests.
    pub fn json_schema(&self) -> Json {
        let mut props = Map::new();
        for (name, ty) in &self.fields {
            props.insert(name.clone(), ty.json_schema());
        }
        let required: Vec<&str> = self.fields.iter().map(|(n, _)| n.as_str()).collect();
        json!({
            "type": "object",
            "properties": props,
            "required": required,
            "additionalProperties": false,
        })
    }
}

/// Schemas by id.
#[derive(Debug, Default)]
pub struct SchemaRegistry {
    schemas: HashMap<String, Schema>,
}

impl SchemaRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, schema: Schema) -> Result<()> {
        if self.schemas.contains_key(schema.id()) {
            return Err(Error::Config(format!(
                "schema `{}` is already registered",
                schema.id()
            )));
        }
        self.schemas.insert(schema.id().to_owned(), schema);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Schema> {
        self.schemas.get(id)
    }
}
