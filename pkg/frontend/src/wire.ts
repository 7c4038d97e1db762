// Client half of the coordination wire format: decode interaction payloads,
// encode responses.  Unknown top-level keys are ignored so an old client
// keeps working against a newer server.

export interface ElementDescriptor {
  name: string;
  label: string;
  set: boolean;
  type?: string;
  subElements?: ElementDescriptor[];
}

export interface Constraint {
  kind: 'valueFrom' | 'required';
  target: string;
  source?: string;
}

export interface InteractionPayload {
  instanceId: number;
  displayElements: ElementDescriptor[];
  gatherElements: ElementDescriptor[];
  constraints: Constraint[];
  value: Record<string, unknown>;
}

export interface StatusDocument {
  instanceId: number;
  status: string;
  failure?: string;
}

export interface ViolationsDocument {
  instanceId: number;
  violations: { constraint: string; message: string }[];
}

const PRIMITIVES = ['String', 'Boolean', 'Integer', 'Float', 'Image', 'Markdown'];

function decodeDescriptor(raw: any): ElementDescriptor {
  if (!raw || typeof raw.name !== 'string') {
    throw new Error('element descriptor needs a name');
  }
  const out: ElementDescriptor = {
    name: raw.name,
    label: typeof raw.label === 'string' ? raw.label : raw.name,
    set: Boolean(raw.set),
  };
  if (Array.isArray(raw.subElements)) {
    out.subElements = raw.subElements.map(decodeDescriptor);
  } else {
    const folded = PRIMITIVES.find((p) => p.toLowerCase() === String(raw.type).toLowerCase());
    if (!folded) throw new Error(`element ${raw.name} has unknown type ${raw.type}`);
    out.type = folded;
  }
  return out;
}

function decodeConstraint(raw: any): Constraint {
  if (!raw || typeof raw.name !== 'string') throw new Error('constraint needs a name');
  if (typeof raw.valueFrom === 'string') {
    return { kind: 'valueFrom', target: raw.name, source: raw.valueFrom };
  }
  if (raw.required) return { kind: 'required', target: raw.name };
  throw new Error(`constraint on ${raw.name} has no known kind`);
}

function singleKeyListToMap(raw: any, what: string): Record<string, unknown> {
  if (raw == null) return {};
  if (!Array.isArray(raw)) {
    if (typeof raw === 'object') return { ...raw };
    throw new Error(`${what} must be a list of single-key objects`);
  }
  const out: Record<string, unknown> = {};
  for (const entry of raw) {
    const keys = Object.keys(entry ?? {});
    if (keys.length !== 1) throw new Error(`${what} entries must have exactly one key`);
    out[keys[0]] = entry[keys[0]];
  }
  return out;
}

export function isPayloadDocument(doc: any): boolean {
  return doc != null && typeof doc === 'object' && 'displayElements' in doc;
}

export function decodePayload(doc: any): InteractionPayload {
  if (typeof doc === 'string') doc = JSON.parse(doc);
  if (typeof doc?.instanceId !== 'number') throw new Error('missing instanceId');
  return {
    instanceId: doc.instanceId,
    displayElements: (doc.displayElements ?? []).map(decodeDescriptor),
    gatherElements: (doc.gatherElements ?? []).map(decodeDescriptor),
    constraints: (doc.constraints ?? []).map(decodeConstraint),
    value: singleKeyListToMap(doc.value, 'value'),
  };
}

// Responses keep the documented list-of-single-key-objects style.
export function responseDocument(instanceId: number, values: Record<string, unknown>): string {
  const response = Object.entries(values).map(([k, v]) => ({ [k]: v }));
  return JSON.stringify({ instanceId, response });
}
