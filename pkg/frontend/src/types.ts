// Shapes of the consultation service's JSON payloads.

export type ValueKind = "boolean" | "number" | "text" | "symbol";

export interface ApiValue {
  kind: ValueKind;
  payload: boolean | number | string;
}

export interface Question {
  variable: string;
  prompt: string;
  allowed_values: ApiValue[] | null;
}

export interface AnswerRecord {
  variable: string;
  value: ApiValue | null; // null records a refusal ("unknown")
}

export interface Provenance {
  kind: "given" | "answered" | "derived";
  rule_id: string | null;
}

export interface FactView {
  variable: string;
  value: ApiValue;
  provenance: Provenance;
}

export interface OutcomeView {
  proven: boolean | null;
  value: ApiValue | null;
  facts: FactView[];
  recommendations: string[];
}

export type SessionStatus = "running" | "needs_answer" | "done";

export interface SessionView {
  id: string;
  kb_id: string;
  kb_version: number;
  mode: string;
  goal: string | null;
  active_rulebase: string;
  status: SessionStatus;
  question: Question | null;
  answers: AnswerRecord[];
  outcome: OutcomeView | null;
  archived_case: string | null;
}

export interface WhyEntry {
  rule_id: string;
  antecedent_index: number;
  establishes: string | null;
}

export interface WhyView {
  question: string;
  entries: WhyEntry[];
  goal: string | null;
  mode: string;
  text: string;
}

export interface ProofView {
  variable: string;
  value: ApiValue;
  justification: string;
  rule_id: string | null;
  children: ProofView[];
}

export interface HowView {
  variable: string;
  tree: ProofView;
  text: string;
}

export interface DiagnosticLocation {
  rulebase?: string | null;
  rule?: string | null;
  line?: number;
  column?: number;
  length?: number;
  path?: string;
}

export interface DiagnosticView {
  severity: "error" | "warning";
  code: string;
  message: string;
  location: DiagnosticLocation | null;
}

export interface KbSummary {
  id: string;
  latest_version: number;
  versions: number[];
}

export interface DeclDoc {
  name: string;
  kind: ValueKind;
  symbol_set: string[] | null;
  askable: boolean;
  prompt: string | null;
}

export interface RuleDoc {
  id: string;
  order_index: number;
  antecedents: unknown[];
  consequents: { variable: string; value: ApiValue }[];
  recommendation: string | null;
}

export interface RulebaseDoc {
  id: string;
  declarations: DeclDoc[];
  rules: RuleDoc[];
}

export interface KbDoc {
  id: string;
  version: number;
  global_declarations: DeclDoc[];
  meta_rules: unknown[];
  rulebases: RulebaseDoc[];
}

export interface KbDetail {
  id: string;
  version: number;
  latest_version: number;
  versions: number[];
  dsl: string;
  kb: KbDoc;
  diagnostics: DiagnosticView[];
}

export interface ValidationResult {
  valid: boolean;
  diagnostics: DiagnosticView[];
}

export interface StoredVersion {
  id: string;
  version: number;
  diagnostics: DiagnosticView[];
}

export interface UserView {
  id: string;
  username: string;
  role: string;
}

export type Role = "admin" | "knowledge_engineer" | "practitioner";

export function valueLabel(v: ApiValue): string {
  if (v.kind === "boolean") return v.payload ? "true" : "false";
  return String(v.payload);
}
