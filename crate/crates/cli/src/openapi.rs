//! OpenAPI description of the /v1 routes, served at `/v1/spec`.

use serde_json::{json, Value};

fn body(schema: &str) -> Value {
    json!({"required": true, "content": {"application/json": {"schema": {"$ref": format!("#/components/schemas/{schema}")}}}})
}

fn ok(schema: &str) -> Value {
    json!({"description": "ok", "content": {"application/json": {"schema": {"$ref": format!("#/components/schemas/{schema}")}}}})
}

fn err(description: &str) -> Value {
    json!({"description": description, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/ApiError"}}}})
}

pub fn document() -> Value {
    let profile = json!({"type": "string", "enum": ["direct_llm", "naive", "advanced"]});
    let stage =
        json!({"type": "string", "enum": ["rewrite", "expand", "retrieve", "rerank", "prompt", "generate", "session"]});
    let strings = json!({"type": "array", "items": {"type": "string"}});
    json!({
        "openapi": "3.0.3",
        "info": {"title": "erag engine", "version": env!("CARGO_PKG_VERSION")},
        "paths": {
            "/v1/ingest": {"post": {
                "summary": "Build and persist the indices; exclusive against every other request",
                "requestBody": body("IngestRequest"),
                "responses": {"200": ok("IngestResponse"), "400": err("malformed documents"), "409": err("a build is running")}
            }},
            "/v1/query": {"post": {
                "summary": "Answer a question within a session, creating the session if needed",
                "requestBody": body("QueryRequest"),
                "responses": {
                    "200": ok("GroundedAnswer"),
                    "400": err("bad request"),
                    "404": err("no index"),
                    "409": err("a build is running"),
                    "502": err("a remote model failed; stage names the pipeline step")
                }
            }},
            "/v1/feedback": {"post": {
                "summary": "Record a verdict; a down verdict may trigger one reformulated retry",
                "requestBody": body("FeedbackRequest"),
                "responses": {
                    "200": ok("FeedbackOutcome"),
                    "400": err("bad verdict"),
                    "404": err("unknown session or turn"),
                    "502": err("a remote model failed during the retry")
                }
            }},
            "/v1/sessions/{id}": {"get": {
                "summary": "The session's retained turns, oldest first",
                "parameters": [{"name": "id", "in": "path", "required": true, "schema": {"type": "string"}}],
                "responses": {"200": ok("SessionView"), "404": err("unknown session")}
            }},
            "/v1/health": {"get": {"responses": {"200": ok("Health")}}},
            "/v1/spec": {"get": {"responses": {"200": {"description": "this document"}}}}
        },
        "components": {"schemas": {
            "ApiError": {"type": "object", "required": ["code", "message"], "properties": {
                "code": {"type": "string", "enum": ["bad_request", "not_found", "upstream_unavailable", "conflict", "internal"]},
                "message": {"type": "string"},
                "stage": stage
            }},
            "IngestRequest": {"type": "object", "properties": {
                "corpus_dir": {"type": "string", "description": "directory readable by the server"},
                "documents": {"type": "array", "items": {"type": "object", "required": ["file_name", "content"], "properties": {
                    "file_name": {"type": "string"},
                    "content": {"type": "string"},
                    "metadata": {"type": "object", "additionalProperties": {"type": "string"}}
                }}},
                "config": {"type": "object", "description": "engine configuration; defaults to the server's"}
            }},
            "IngestResponse": {"type": "object", "required": ["chunk_count", "index_version"], "properties": {
                "chunk_count": {"type": "integer"},
                "index_version": {"type": "string"}
            }},
            "QueryRequest": {"type": "object", "required": ["session_id", "query"], "properties": {
                "session_id": {"type": "string"},
                "query": {"type": "string"},
                "profile": profile
            }},
            "Source": {"type": "object", "required": ["chunk_id", "file_name", "fused", "dense_norm", "sparse_norm"], "properties": {
                "chunk_id": {"type": "string"},
                "file_name": {"type": "string"},
                "fused": {"type": "number"},
                "rerank": {"type": "number", "nullable": true},
                "dense_norm": {"type": "number"},
                "sparse_norm": {"type": "number"}
            }},
            "GroundedAnswer": {"type": "object",
                "required": ["answer_text", "citations", "used_chunks", "reformulated", "final_query", "query", "profile", "sources", "dropped_citations", "warnings"],
                "properties": {
                    "answer_text": {"type": "string"},
                    "citations": strings,
                    "used_chunks": strings,
                    "summary": {"type": "string", "nullable": true},
                    "reformulated": {"type": "boolean"},
                    "final_query": {"type": "string"},
                    "query": {"type": "string"},
                    "profile": profile,
                    "turn_id": {"type": "string", "nullable": true},
                    "sources": {"type": "array", "items": {"$ref": "#/components/schemas/Source"}},
                    "dropped_citations": strings,
                    "warnings": strings
                }
            },
            "FeedbackRequest": {"type": "object", "required": ["session_id", "turn_id", "verdict"], "properties": {
                "session_id": {"type": "string"},
                "turn_id": {"type": "string"},
                "verdict": {"type": "string", "enum": ["up", "down"]}
            }},
            "FeedbackEvent": {"type": "object", "required": ["session_id", "turn_id", "verdict", "timestamp_ms", "triggered_retry"], "properties": {
                "session_id": {"type": "string"},
                "turn_id": {"type": "string"},
                "verdict": {"type": "string", "enum": ["up", "down"]},
                "timestamp_ms": {"type": "integer"},
                "triggered_retry": {"type": "boolean"}
            }},
            "FeedbackOutcome": {"type": "object", "required": ["event", "retried", "budget_exhausted"], "properties": {
                "event": {"$ref": "#/components/schemas/FeedbackEvent"},
                "retried": {"type": "boolean"},
                "budget_exhausted": {"type": "boolean"},
                "new_answer": {"allOf": [{"$ref": "#/components/schemas/GroundedAnswer"}], "nullable": true}
            }},
            "Turn": {"type": "object",
                "required": ["turn_id", "query", "final_query", "answer_text", "citations", "reformulated", "profile", "retried", "timestamp_ms"],
                "properties": {
                    "turn_id": {"type": "string"},
                    "query": {"type": "string"},
                    "final_query": {"type": "string"},
                    "answer_text": {"type": "string"},
                    "citations": strings,
                    "feedback": {"type": "string", "enum": ["up", "down"], "nullable": true},
                    "reformulated": {"type": "boolean"},
                    "profile": profile,
                    "retry_of": {"type": "string"},
                    "retried": {"type": "boolean"},
                    "timestamp_ms": {"type": "integer"}
                }
            },
            "SessionView": {"type": "object", "required": ["session_id", "turns", "retry_budget_left"], "properties": {
                "session_id": {"type": "string"},
                "turns": {"type": "array", "items": {"$ref": "#/components/schemas/Turn"}},
                "retry_budget_left": {"type": "integer"}
            }},
            "Health": {"type": "object", "required": ["status"], "properties": {
                "status": {"type": "string"},
                "index_version": {"type": "string", "nullable": true}
            }}
        }}
    })
}
