// Client-side customization lookup.  Two tiers, checked in order:
//
//   1. a bespoke template for the whole activity (`<activity>.html`);
//   2. a snippet for one element's type, per role
//      (`type-<name>.display.html` / `type-<name>.gather.html`);
//   3. otherwise the built-in default widget.
//
// Overrides are user-authored HTML files served from /customizations/;
// the registry itself never knows any activity or type name up front.

export type Role = 'display' | 'gather';

export class CustomizationRegistry {
  private activityTemplates = new Map<string, string>();
  private typeSnippets = { display: new Map<string, string>(), gather: new Map<string, string>() };

  registerActivityTemplate(activity: string, html: string): this {
    this.activityTemplates.set(activity, html);
    return this;
  }

  registerTypeSnippet(typeName: string, role: Role, html: string): this {
    this.typeSnippets[role].set(typeName, html);
    return this;
  }

  activityTemplate(activity: string): string | undefined {
    return this.activityTemplates.get(activity);
  }

  typeSnippet(typeName: string | undefined, role: Role): string | undefined {
    if (!typeName) return undefined;
    return this.typeSnippets[role].get(typeName);
  }
}

// Discovery over the statically served customizations directory; a 404
// simply means "no override here" and is cached as such.
export async function discoverableRegistry(
  base: string,
  fetchImpl: typeof fetch = fetch,
): Promise<{ registry: CustomizationRegistry; ensureActivity: (name: string) => Promise<void>; ensureType: (name: string, role: Role) => Promise<void> }> {
  const registry = new CustomizationRegistry();
  const seen = new Set<string>();

  async function fetchOverride(path: string): Promise<string | undefined> {
    try {
      const reply = await fetchImpl(`${base}/customizations/${path}`);
      if (!reply.ok) return undefined;
      return await reply.text();
    } catch {
      return undefined;
    }
  }

  return {
    registry,
    async ensureActivity(name: string) {
      const key = `activity:${name}`;
      if (seen.has(key)) return;
      seen.add(key);
      const html = await fetchOverride(`${name}.html`);
      if (html !== undefined) registry.registerActivityTemplate(name, html);
    },
    async ensureType(name: string, role: Role) {
      const key = `type:${role}:${name}`;
      if (seen.has(key)) return;
      seen.add(key);
      const html = await fetchOverride(`type-${name}.${role}.html`);
      if (html !== undefined) registry.registerTypeSnippet(name, role, html);
    },
  };
}
