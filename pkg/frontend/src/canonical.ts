/**
 * Canonical metamodel JSON format: types, validation and serialization.
 *
 * This mirrors the recommendation service's validator exactly, so the editor
 * never sends a document the service would reject. Field order in the
 * serialized form is fixed (id, classes; name, attributes, associations;
 * name, type; name, target, containment).
 */

export interface AttributeDoc {
  name: string;
  type: string;
}

export interface AssociationDoc {
  name: string;
  target: string;
  containment: boolean;
}

export interface ClassDoc {
  name: string;
  attributes: AttributeDoc[];
  associations: AssociationDoc[];
}

export interface MetamodelDoc {
  id: string;
  classes: ClassDoc[];
}

function isIdentifier(text: unknown): text is string {
  return typeof text === "string" && text.length > 0 && !/\s/.test(text);
}

/** All problems with a document; an empty list means it is valid. */
export function validateMetamodel(doc: MetamodelDoc): string[] {
  const problems: string[] = [];
  const names = new Set<string>();
  for (const cls of doc.classes) {
    if (!isIdentifier(cls.name)) {
      problems.push(`class name ${JSON.stringify(cls.name)} is not a valid identifier`);
      continue;
    }
    if (names.has(cls.name)) {
      problems.push(`duplicate class name "${cls.name}"`);
    }
    names.add(cls.name);
  }
  for (const cls of doc.classes) {
    const attrNames = new Set<string>();
    for (const attr of cls.attributes) {
      if (!isIdentifier(attr.name) || !isIdentifier(attr.type)) {
        problems.push(`invalid attribute in class "${cls.name}"`);
      } else if (attrNames.has(attr.name)) {
        problems.push(`duplicate attribute "${attr.name}" in class "${cls.name}"`);
      }
      attrNames.add(attr.name);
    }
    for (const assoc of cls.associations) {
      if (!isIdentifier(assoc.name)) {
        problems.push(`invalid association name in class "${cls.name}"`);
      }
      if (!names.has(assoc.target)) {
        problems.push(
          `association "${assoc.name}" in class "${cls.name}" targets undeclared class "${assoc.target}"`,
        );
      }
    }
  }
  return problems;
}

/** Serialize with the canonical field order. */
export function serializeMetamodel(doc: MetamodelDoc, indent?: number): string {
  const ordered = {
    id: doc.id,
    classes: doc.classes.map((cls) => ({
      name: cls.name,
      attributes: cls.attributes.map((a) => ({ name: a.name, type: a.type })),
      associations: cls.associations.map((s) => ({
        name: s.name,
        target: s.target,
        containment: s.containment,
      })),
    })),
  };
  return JSON.stringify(ordered, null, indent);
}

const CLASS_KEYS = new Set(["name", "attributes", "associations"]);
const ATTR_KEYS = new Set(["name", "type"]);
const ASSOC_KEYS = new Set(["name", "target", "containment"]);

function rejectUnknown(obj: object, allowed: Set<string>, where: string): void {
  for (const key of Object.keys(obj)) {
    if (!allowed.has(key)) {
      throw new Error(`unknown field "${key}" in ${where}`);
    }
  }
}

/** Parse and fully validate a canonical document. Throws on any problem. */
export function parseMetamodel(text: string): MetamodelDoc {
  const raw = JSON.parse(text);
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error("canonical document must be a JSON object");
  }
  rejectUnknown(raw, new Set(["id", "classes"]), "document");
  const doc: MetamodelDoc = { id: raw.id ?? "", classes: [] };
  if (typeof doc.id !== "string") throw new Error('"id" must be a string');
  if (!Array.isArray(raw.classes)) throw new Error('"classes" must be a list');
  for (const rc of raw.classes) {
    rejectUnknown(rc, CLASS_KEYS, `class "${rc?.name}"`);
    const cls: ClassDoc = { name: rc.name, attributes: [], associations: [] };
    for (const ra of rc.attributes ?? []) {
      rejectUnknown(ra, ATTR_KEYS, "attribute");
      cls.attributes.push({ name: ra.name, type: ra.type });
    }
    for (const rs of rc.associations ?? []) {
      rejectUnknown(rs, ASSOC_KEYS, "association");
      if (typeof (rs.containment ?? false) !== "boolean") {
        throw new Error('"containment" must be a boolean');
      }
      cls.associations.push({
        name: rs.name,
        target: rs.target,
        containment: rs.containment ?? false,
      });
    }
    doc.classes.push(cls);
  }
  const problems = validateMetamodel(doc);
  if (problems.length > 0) {
    throw new Error(problems.join("; "));
  }
  return doc;
}

/** Elements a context is counted in: classes + attributes + associations. */
export function elementCount(doc: MetamodelDoc): number {
  return doc.classes.reduce(
    (n, c) => n + 1 + c.attributes.length + c.associations.length,
    0,
  );
}
