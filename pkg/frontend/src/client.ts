// Session loop: launch a flow, render each pending payload, post the
// gathered response, repeat until the instance finishes.  The client keeps
// only the instance id between exchanges; if the connection drops (or the
// server restarts) the pending payload is refetched by that id and the
// session resumes where it was.

import { discoverableRegistry, Role } from './registry.js';
import { render } from './render.js';
import {
  InteractionPayload,
  ViolationsDocument,
  decodePayload,
  isPayloadDocument,
  responseDocument,
} from './wire.js';

export interface Exchange {
  kind: 'payload' | 'status' | 'violations';
  activity: string | null;
  payload?: InteractionPayload;
  status?: string;
  failure?: string;
  violations?: ViolationsDocument;
}

async function asExchange(reply: Response): Promise<Exchange> {
  const doc = await reply.json();
  const activity = reply.headers.get('X-Activity');
  if (reply.status === 422 && Array.isArray(doc.violations)) {
    return { kind: 'violations', activity, violations: doc };
  }
  if (!reply.ok) throw new Error(doc.error ?? `server said ${reply.status}`);
  if (isPayloadDocument(doc)) {
    return { kind: 'payload', activity, payload: decodePayload(doc) };
  }
  return { kind: 'status', activity, status: doc.status, failure: doc.failure };
}

export class Session {
  instanceId: number | null = null;

  constructor(
    private base: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  async listFlows(): Promise<{ name: string; mode: string }[]> {
    const reply = await this.fetchImpl(`${this.base}/flows`);
    return (await reply.json()).flows;
  }

  async launch(flow: string): Promise<Exchange> {
    const reply = await this.fetchImpl(`${this.base}/flows/${flow}/instances`, { method: 'POST' });
    const exchange = await asExchange(reply);
    this.instanceId = exchange.payload?.instanceId
      ?? (exchange.kind === 'status' ? (await this.refetchId(reply)) : null);
    return exchange;
  }

  private async refetchId(reply: Response): Promise<number | null> {
    // status documents carry the id too
    try {
      const clone = await reply.clone().json();
      return typeof clone.instanceId === 'number' ? clone.instanceId : null;
    } catch {
      return null;
    }
  }

  async pending(): Promise<Exchange> {
    if (this.instanceId == null) throw new Error('no instance to resume');
    const reply = await this.fetchImpl(`${this.base}/instances/${this.instanceId}/pending`);
    return asExchange(reply);
  }

  async respond(values: Record<string, unknown>): Promise<Exchange> {
    if (this.instanceId == null) throw new Error('no instance to respond to');
    const reply = await this.fetchImpl(`${this.base}/instances/${this.instanceId}/response`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: responseDocument(this.instanceId, values),
    });
    return asExchange(reply);
  }
}

// Browser wiring: render exchanges into a mount point, with a failure
// banner whose retry refetches the pending payload by instance id.
export async function runInBrowser(base: string, mount: HTMLElement): Promise<void> {
  const session = new Session(base);
  const discovery = await discoverableRegistry(base);

  const banner = document.createElement('div');
  banner.className = 'banner';
  banner.hidden = true;
  const view = document.createElement('div');
  view.className = 'view';
  mount.replaceChildren(banner, view);

  function showBanner(message: string, retry: () => void): void {
    banner.hidden = false;
    banner.replaceChildren();
    banner.append(message + ' ');
    const button = document.createElement('button');
    button.textContent = 'Retry';
    button.addEventListener('click', () => {
      banner.hidden = true;
      retry();
    });
    banner.appendChild(button);
  }

  async function ensureOverrides(exchange: Exchange): Promise<void> {
    if (!exchange.payload) return;
    if (exchange.activity) await discovery.ensureActivity(exchange.activity);
    const roles: [Role, { type?: string }[]][] = [
      ['display', exchange.payload.displayElements],
      ['gather', exchange.payload.gatherElements],
    ];
    for (const [role, elements] of roles) {
      for (const d of elements) {
        if (d.type) await discovery.ensureType(d.type, role);
      }
    }
  }

  async function show(exchange: Exchange, previous?: Exchange): Promise<void> {
    if (exchange.kind === 'violations' && previous?.payload) {
      const again = await renderStep(previous);
      for (const violation of exchange.violations!.violations) {
        const note = document.createElement('div');
        note.className = 'violation';
        note.textContent = violation.message;
        again.root.prepend(note);
      }
      return;
    }
    if (exchange.kind === 'status') {
      const notice = document.createElement('div');
      notice.className = 'finished';
      notice.textContent = exchange.status === 'finished'
        ? 'Flow finished.'
        : `Flow is ${exchange.status}: ${exchange.failure ?? ''}`;
      view.replaceChildren(notice);
      return;
    }
    await renderStep(exchange);
  }

  async function renderStep(exchange: Exchange) {
    await ensureOverrides(exchange);
    const rendered = render(
      exchange.payload!, discovery.registry, exchange.activity,
      async (values) => {
        try {
          const next = await session.respond(values);
          await show(next, exchange);
        } catch (err) {
          showBanner(String(err), () => resume());
        }
      },
    );
    view.replaceChildren(rendered.root);
    return rendered;
  }

  async function resume(): Promise<void> {
    try {
      await show(await session.pending());
    } catch (err) {
      showBanner(String(err), () => resume());
    }
  }

  const flows = await session.listFlows();
  const picker = document.createElement('div');
  picker.className = 'flow-picker';
  for (const flow of flows) {
    const button = document.createElement('button');
    button.textContent = `${flow.name} (${flow.mode})`;
    button.addEventListener('click', async () => {
      try {
        await show(await session.launch(flow.name));
      } catch (err) {
        showBanner(String(err), () => resume());
      }
    });
    picker.appendChild(button);
  }
  view.replaceChildren(picker);
}
