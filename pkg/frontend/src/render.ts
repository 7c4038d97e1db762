// Schema-driven rendering of interaction payloads.
//
// The default renderer walks the element descriptors and produces labeled
// widgets: String -> text field, Boolean -> toggle, Integer/Float ->
// numeric input, Image -> img element, sets -> list/table, valueFrom ->
// a selection bound to the displayed set.  Overrides substitute per the
// registry's lookup order (activity template, then type snippet, then
// default).  The form only submits once every `required` and `valueFrom`
// constraint is satisfied locally; the server re-validates anyway.
//
// Template/snippet data interface (user-authored HTML):
//   data-slot="name"    node receives the displayed element's value
//   data-label="name"   node receives the element's label
//   data-gather="name"  input/select gathers that element
//   data-submit         clicking this submits the form
// Snippets apply to one element, so their data attributes may omit the
// name.  A template naming an element the payload does not carry produces
// a visible diagnostic, never a silent hole.

import { CustomizationRegistry } from './registry.js';
import { Constraint, ElementDescriptor, InteractionPayload } from './wire.js';

export interface RenderedForm {
  root: HTMLElement;
  values(): Record<string, unknown>;
  satisfied(): boolean;
  diagnostics: string[];
}

type Reader = () => unknown; // undefined means "omit from the response"

interface FormState {
  readers: Map<string, Reader>;
  refresh: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function scalarText(value: unknown): string {
  if (typeof value === 'boolean') return value ? 'yes' : 'no';
  return value == null ? '' : String(value);
}

// ------------------------------------------------------------ display side

function displayValueNode(d: ElementDescriptor, value: unknown): HTMLElement {
  if (d.set) {
    const scalar: ElementDescriptor = { ...d, set: false };
    const items = Array.isArray(value) ? value : [];
    if (d.subElements) {
      const table = el('table', 'element-table');
      const head = el('tr');
      for (const sub of d.subElements) head.appendChild(el('th', undefined, sub.label));
      table.appendChild(head);
      for (const record of items) {
        const row = el('tr');
        for (const sub of d.subElements) {
          const cell = el('td');
          cell.appendChild(displayValueNode(sub, (record as any)?.[sub.name]));
          row.appendChild(cell);
        }
        table.appendChild(row);
      }
      return table;
    }
    const list = el('ul', 'element-list');
    for (const item of items) {
      const li = el('li');
      li.appendChild(displayValueNode(scalar, item));
      list.appendChild(li);
    }
    return list;
  }
  if (d.subElements) {
    const dl = el('dl', 'element-record');
    for (const sub of d.subElements) {
      dl.appendChild(el('dt', undefined, sub.label));
      const dd = el('dd');
      dd.appendChild(displayValueNode(sub, (value as any)?.[sub.name]));
      dl.appendChild(dd);
    }
    return dl;
  }
  if (d.type === 'Image') {
    const img = el('img', 'element-image');
    img.setAttribute('src', String(value ?? ''));
    img.setAttribute('alt', d.label);
    return img;
  }
  const cls = d.type === 'Markdown' ? 'element-value markdown' : 'element-value';
  return el('span', cls, scalarText(value));
}

function defaultDisplayWidget(d: ElementDescriptor, value: unknown): HTMLElement {
  const wrap = el('div', 'element display-element');
  wrap.setAttribute('data-element', d.name);
  wrap.appendChild(el('span', 'element-label', d.label));
  wrap.appendChild(displayValueNode(d, value));
  return wrap;
}

// ------------------------------------------------------------- gather side

function pickOptions(select: HTMLSelectElement, d: ElementDescriptor, members: unknown[]): void {
  const blank = el('option', undefined, `(pick ${d.label})`);
  blank.setAttribute('value', '');
  select.appendChild(blank);
  members.forEach((member, index) => {
    const summary =
      member !== null && typeof member === 'object'
        ? scalarText(Object.values(member as object).find((v) => typeof v === 'string') ?? index + 1)
        : scalarText(member);
    const option = el('option', undefined, summary);
    option.setAttribute('value', String(index));
    select.appendChild(option);
  });
}

function wireInput(
  input: HTMLElement, d: ElementDescriptor, pickFrom: unknown[] | null, state: FormState,
): void {
  input.addEventListener('input', state.refresh);
  input.addEventListener('change', state.refresh);
  if (input instanceof HTMLSelectElement && pickFrom) {
    if (!input.options.length) pickOptions(input, d, pickFrom);
    state.readers.set(d.name, () => {
      const index = input.value === '' ? -1 : Number(input.value);
      return index >= 0 ? pickFrom[index] : undefined;
    });
    return;
  }
  const field = input as HTMLInputElement;
  state.readers.set(d.name, () => {
    if (field.type === 'checkbox') return field.checked ? true : undefined;
    const text = field.value.trim();
    if (text === '') return undefined;
    if (d.set) {
      const parts = text.split(',').map((p) => p.trim()).filter(Boolean);
      return d.type === 'Integer' || d.type === 'Float' ? parts.map(Number) : parts;
    }
    if (d.type === 'Integer') return Number.parseInt(text, 10);
    if (d.type === 'Float') return Number.parseFloat(text);
    if (d.type === 'Boolean') return ['y', 'yes', 'true'].includes(text.toLowerCase());
    return text;
  });
}

function defaultGatherWidget(
  d: ElementDescriptor, pickFrom: unknown[] | null, state: FormState,
): HTMLElement {
  const wrap = el('div', 'element gather-element');
  wrap.setAttribute('data-element', d.name);
  const label = el('label', 'element-label', d.label);
  wrap.appendChild(label);
  let input: HTMLElement;
  if (pickFrom) {
    input = el('select', 'gather-input');
  } else if (d.type === 'Boolean') {
    input = el('input', 'gather-input gather-toggle');
    input.setAttribute('type', 'checkbox');
  } else if ((d.type === 'Integer' || d.type === 'Float') && !d.set) {
    input = el('input', 'gather-input');
    input.setAttribute('type', 'number');
    if (d.type === 'Integer') input.setAttribute('step', '1');
  } else if (d.subElements) {
    // composite gathering needs a bespoke template
    const note = el('div', 'render-diagnostic',
      `no default widget can gather composite element "${d.name}"`);
    wrap.appendChild(note);
    return wrap;
  } else {
    input = el('input', 'gather-input');
    input.setAttribute('type', 'text');
    if (d.set) input.setAttribute('placeholder', 'comma-separated');
  }
  wrap.appendChild(input);
  wireInput(input, d, pickFrom, state);
  return wrap;
}

// --------------------------------------------------------------- overrides

function fillSnippet(
  html: string, d: ElementDescriptor, value: unknown,
  pickFrom: unknown[] | null, state: FormState | null, diagnostics: string[],
): HTMLElement {
  const host = el('div', 'element custom-element');
  host.setAttribute('data-element', d.name);
  host.innerHTML = html;
  for (const node of Array.from(host.querySelectorAll('[data-label]'))) {
    node.textContent = d.label;
  }
  const slots = Array.from(host.querySelectorAll('[data-slot]'));
  for (const node of slots) {
    if (node instanceof HTMLImageElement) node.setAttribute('src', String(value ?? ''));
    else node.replaceChildren(displayValueNode({ ...d, label: d.label }, value));
  }
  const inputs = Array.from(host.querySelectorAll('[data-gather]'));
  if (state) {
    for (const node of inputs) wireInput(node as HTMLElement, d, pickFrom, state);
    if (!inputs.length && !slots.length) {
      diagnostics.push(`snippet for "${d.name}" has neither data-slot nor data-gather`);
    }
  }
  return host;
}

function renderTemplate(
  html: string, payload: InteractionPayload, state: FormState,
  pickSources: Map<string, unknown[]>, diagnostics: string[], submit: () => void,
): HTMLElement {
  const root = el('div', 'activity-template');
  root.innerHTML = html;
  const displays = new Map(payload.displayElements.map((d) => [d.name, d]));
  const gathers = new Map(payload.gatherElements.map((d) => [d.name, d]));

  for (const node of Array.from(root.querySelectorAll('[data-label]'))) {
    const name = node.getAttribute('data-label')!;
    const d = displays.get(name) ?? gathers.get(name);
    if (!d) {
      diagnostics.push(`template labels unknown element "${name}"`);
      continue;
    }
    node.textContent = d.label;
  }
  for (const node of Array.from(root.querySelectorAll('[data-slot]'))) {
    const name = node.getAttribute('data-slot')!;
    const d = displays.get(name);
    if (!d) {
      diagnostics.push(`template displays unknown element "${name}"`);
      continue;
    }
    const value = payload.value[name];
    if (node instanceof HTMLImageElement) node.setAttribute('src', String(value ?? ''));
    else node.replaceChildren(displayValueNode(d, value));
  }
  for (const node of Array.from(root.querySelectorAll('[data-gather]'))) {
    const name = node.getAttribute('data-gather')!;
    const d = gathers.get(name);
    if (!d) {
      diagnostics.push(`template gathers unknown element "${name}"`);
      continue;
    }
    wireInput(node as HTMLElement, d, pickSources.get(name) ?? null, state);
  }
  const submitNodes = Array.from(root.querySelectorAll('[data-submit]'));
  if (!submitNodes.length) diagnostics.push('template has no data-submit hook');
  for (const node of submitNodes) node.addEventListener('click', submit);
  return root;
}

// ------------------------------------------------------------------ render

export function render(
  payload: InteractionPayload,
  registry: CustomizationRegistry,
  activity: string | null,
  onSubmit: (values: Record<string, unknown>) => void,
): RenderedForm {
  const diagnostics: string[] = [];
  const state: FormState = { readers: new Map(), refresh: () => update() };

  const required = new Set(
    payload.constraints.filter((c) => c.kind === 'required').map((c) => c.target),
  );
  const pickSources = new Map<string, unknown[]>();
  for (const c of payload.constraints) {
    if (c.kind === 'valueFrom' && c.source) {
      const members = payload.value[c.source];
      pickSources.set(c.target, Array.isArray(members) ? members : []);
    }
  }

  const values = (): Record<string, unknown> => {
    const out: Record<string, unknown> = {};
    for (const [name, read] of state.readers) {
      const value = read();
      if (value !== undefined) out[name] = value;
    }
    return out;
  };
  const satisfied = (): boolean => {
    const current = values();
    for (const name of required) {
      if (current[name] === undefined || current[name] === '') return false;
    }
    for (const value of Object.values(current)) {
      if (typeof value === 'number' && Number.isNaN(value)) return false;
    }
    return true;
  };
  const submit = () => {
    if (satisfied()) onSubmit(values());
  };

  let root: HTMLElement;
  const template = activity ? registry.activityTemplate(activity) : undefined;
  if (template !== undefined) {
    root = renderTemplate(template, payload, state, pickSources, diagnostics, submit);
  } else {
    root = el('div', 'activity-default');
    for (const d of payload.displayElements) {
      const snippet = registry.typeSnippet(d.type, 'display');
      root.appendChild(
        snippet !== undefined
          ? fillSnippet(snippet, d, payload.value[d.name], null, null, diagnostics)
          : defaultDisplayWidget(d, payload.value[d.name]),
      );
    }
    for (const d of payload.gatherElements) {
      const pickFrom = pickSources.get(d.name) ?? null;
      const snippet = pickFrom ? undefined : registry.typeSnippet(d.type, 'gather');
      root.appendChild(
        snippet !== undefined
          ? fillSnippet(snippet, d, undefined, pickFrom, state, diagnostics)
          : defaultGatherWidget(d, pickFrom, state),
      );
    }
    const button = el('button', 'submit', 'Send');
    button.setAttribute('data-submit', '');
    button.addEventListener('click', submit);
    root.appendChild(button);
  }

  const gate = () => {
    const ok = satisfied();
    for (const node of Array.from(root.querySelectorAll('[data-submit]'))) {
      if (node instanceof HTMLButtonElement || node instanceof HTMLInputElement) {
        node.disabled = !ok;
      } else {
        node.setAttribute('aria-disabled', String(!ok));
      }
    }
  };
  const update = gate;
  gate();

  for (const message of diagnostics) {
    root.appendChild(el('div', 'render-diagnostic', message));
  }
  return { root, values, satisfied, diagnostics };
}
