/**
 * Editor state: the working metamodel, the selected slot, the suggestion
 * panel, and the scenario mode.
 *
 * Rename mode maps to the service's global strategy on an existing element;
 * construct mode names an element being created through a pending slot.
 * Edits snapshot the canonical serialization first, so undo restores the
 * previous document byte for byte.
 */

import {
  MetamodelDoc,
  elementCount,
  parseMetamodel,
  serializeMetamodel,
  validateMetamodel,
} from "./canonical.js";
import type {
  PendingSlot,
  RecommendRequest,
  SuggestionItem,
  TargetRef,
} from "./client.js";

export type ScenarioMode = "rename" | "construct";

export type Slot =
  | { variant: "target"; target: TargetRef }
  | { variant: "pending"; pending: PendingSlot };

export interface PanelState {
  candidates: SuggestionItem[];
  loading: boolean;
  error: string | null;
  contextSize: number | null;
}

const EMPTY_PANEL: PanelState = {
  candidates: [],
  loading: false,
  error: null,
  contextSize: null,
};

export class EditorState {
  metamodel: MetamodelDoc;
  mode: ScenarioMode = "construct";
  k = 5;
  slot: Slot | null = null;
  panel: PanelState = { ...EMPTY_PANEL };
  private undoStack: string[] = [];

  constructor(id = "untitled") {
    this.metamodel = { id, classes: [] };
  }

  // -- editing actions -----------------------------------------------------

  /** Returns a validation message on failure, null on success. */
  addClass(name: string): string | null {
    if (this.metamodel.classes.some((c) => c.name === name)) {
      return `a class named "${name}" already exists`;
    }
    return this.apply((doc) => {
      doc.classes.push({ name, attributes: [], associations: [] });
    });
  }

  addAttribute(owner: string, name: string, type = "EString"): string | null {
    const cls = this.metamodel.classes.find((c) => c.name === owner);
    if (!cls) return `no class named "${owner}"`;
    if (cls.attributes.some((a) => a.name === name)) {
      return `class "${owner}" already has an attribute "${name}"`;
    }
    return this.apply((doc) => {
      doc.classes.find((c) => c.name === owner)!.attributes.push({ name, type });
    });
  }

  /** Both endpoint classes must already exist. */
  addAssociation(
    owner: string,
    name: string,
    target: string,
    containment = false,
  ): string | null {
    if (!this.metamodel.classes.some((c) => c.name === owner)) {
      return `no class named "${owner}"`;
    }
    if (!this.metamodel.classes.some((c) => c.name === target)) {
      return `target class "${target}" does not exist yet`;
    }
    return this.apply((doc) => {
      doc.classes
        .find((c) => c.name === owner)!
        .associations.push({ name, target, containment });
    });
  }

  private apply(edit: (doc: MetamodelDoc) => void): string | null {
    const before = this.exportJson();
    const draft = parseMetamodel(before); // deep copy through the parser
    edit(draft);
    const problems = validateMetamodel(draft);
    if (problems.length > 0) {
      return problems.join("; ");
    }
    this.undoStack.push(before);
    this.metamodel = draft;
    return null;
  }

  undo(): boolean {
    const previous = this.undoStack.pop();
    if (previous === undefined) return false;
    this.metamodel = parseMetamodel(previous);
    return true;
  }

  // -- slot selection and requests ------------------------------------------

  selectRenameTarget(target: TargetRef): void {
    this.mode = "rename";
    this.slot = { variant: "target", target };
    this.panel = { ...EMPTY_PANEL };
  }

  selectPendingSlot(pending: PendingSlot): void {
    this.mode = "construct";
    this.slot = { variant: "pending", pending };
    this.panel = { ...EMPTY_PANEL };
  }

  /** The request the selected slot maps to; rename uses the global strategy. */
  buildRequest(): RecommendRequest {
    if (!this.slot) {
      throw new Error("no slot selected");
    }
    const base = { metamodel: this.metamodel, k: this.k };
    return this.slot.variant === "target"
      ? { ...base, target: this.slot.target, strategy: "global" }
      : { ...base, pending: this.slot.pending };
  }

  applySuggestions(candidates: SuggestionItem[], contextSize: number): void {
    this.panel = { candidates, loading: false, error: null, contextSize };
  }

  /**
   * Write the candidate at `index` into the selected slot verbatim.
   * Returns a validation message on failure, null on success.
   */
  acceptSuggestion(index: number): string | null {
    const candidate = this.panel.candidates[index];
    if (!candidate || !this.slot) {
      return "nothing to accept";
    }
    const text = candidate.text;
    let problem: string | null;
    if (this.slot.variant === "pending") {
      const pending = this.slot.pending;
      if (pending.kind === "class") {
        problem = this.addClass(text);
      } else if (pending.kind === "attribute") {
        problem = this.addAttribute(pending.owner, text, pending.type ?? "EString");
      } else {
        problem = this.addAssociation(pending.owner, text, pending.target);
      }
    } else {
      problem = this.renameTarget(this.slot.target, text);
    }
    if (problem === null) {
      this.slot = null;
      this.panel = { ...EMPTY_PANEL };
    }
    return problem;
  }

  rejectAll(): void {
    this.panel = { ...EMPTY_PANEL };
  }

  private renameTarget(target: TargetRef, text: string): string | null {
    return this.apply((doc) => {
      const cls = doc.classes[target.class_index];
      if (!cls) throw new Error("target class out of range");
      if (target.kind === "class") {
        for (const c of doc.classes) {
          for (const s of c.associations) {
            if (s.target === cls.name) s.target = text;
          }
        }
        cls.name = text;
      } else if (target.kind === "attribute") {
        cls.attributes[target.member_index ?? 0].name = text;
      } else {
        cls.associations[target.member_index ?? 0].name = text;
      }
    });
  }

  // -- import/export ---------------------------------------------------------

  exportJson(indent?: number): string {
    return serializeMetamodel(this.metamodel, indent);
  }

  importJson(text: string): string | null {
    try {
      const doc = parseMetamodel(text);
      this.undoStack.push(this.exportJson());
      this.metamodel = doc;
      return null;
    } catch (err) {
      return err instanceof Error ? err.message : String(err);
    }
  }

  elementCount(): number {
    return elementCount(this.metamodel);
  }
}
