// Batch grid rendering: one card per candidate with a relevant/irrelevant
// toggle. Relevant cards frame green, irrelevant red. A failed image fetch
// swaps in a placeholder and never blocks labeling.

import type { SessionView } from "./state.js";

export interface GridHandlers {
    onToggle(sampleId: number, relevant: boolean): void;
}

export function renderBatch(container: HTMLElement, view: SessionView,
                            imageUrl: (rel: string | null) => string | null,
                            handlers: GridHandlers): void {
    container.textContent = "";
    for (const item of view.batch) {
        const card = document.createElement("div");
        card.className = "card";
        card.dataset.sampleId = String(item.sample_id);
        const toggled = view.toggles.get(item.sample_id);
        if (toggled === true) card.classList.add("relevant");
        if (toggled === false) card.classList.add("irrelevant");

        const resolved = imageUrl(item.image_url);
        if (resolved !== null) {
            const img = document.createElement("img");
            img.src = resolved;
            img.alt = `sample ${item.sample_id}`;
            img.addEventListener("error", () => {
                img.replaceWith(placeholder(item.sample_id));
            });
            card.appendChild(img);
        } else {
            card.appendChild(placeholder(item.sample_id));
        }

        const caption = document.createElement("div");
        caption.className = "caption";
        caption.textContent =
            `#${item.sample_id}  f=${item.score.toFixed(3)}`;
        card.appendChild(caption);

        const buttons = document.createElement("div");
        buttons.className = "buttons";
        buttons.appendChild(toggleButton("relevant", true, item.sample_id,
                                         toggled === true, handlers));
        buttons.appendChild(toggleButton("irrelevant", false, item.sample_id,
                                         toggled === false, handlers));
        card.appendChild(buttons);
        container.appendChild(card);
    }
}

function placeholder(sampleId: number): HTMLElement {
    const div = document.createElement("div");
    div.className = "placeholder";
    div.textContent = `sample ${sampleId}`;
    return div;
}

function toggleButton(label: string, relevant: boolean, sampleId: number,
                      active: boolean, handlers: GridHandlers): HTMLElement {
    const btn = document.createElement("button");
    btn.type = "button";
    btn.textContent = label;
    btn.className = relevant ? "mark-relevant" : "mark-irrelevant";
    if (active) btn.classList.add("active");
    btn.addEventListener("click", () => handlers.onToggle(sampleId, relevant));
    return btn;
}

/**
 * Keyboard shortcuts: digits 1-9 and 0 mark the nth card relevant,
 * shift+digit marks it irrelevant, "a"/"x" mark every card, Enter submits.
 */
export function bindKeyboard(target: EventTarget, getView: () => SessionView,
                             actions: {
                                 toggle(sampleId: number, relevant: boolean): void;
                                 markAll(relevant: boolean): void;
                                 submit(): void;
                             }): void {
    target.addEventListener("keydown", (event) => {
        const key = (event as KeyboardEvent).key;
        const code = (event as KeyboardEvent).code;
        const view = getView();
        if (view.phase !== "awaiting_labels") return;
        if (key === "Enter") {
            actions.submit();
            return;
        }
        if (key === "a" || key === "A") {
            actions.markAll(true);
            return;
        }
        if (key === "x" || key === "X") {
            actions.markAll(false);
            return;
        }
        if (code.startsWith("Digit")) {
            // shift+digit changes event.key on most layouts; code does not
            const digit = "1234567890".indexOf(code.slice(5));
            if (digit >= 0 && digit < view.batch.length) {
                const shift = (event as KeyboardEvent).shiftKey;
                actions.toggle(view.batch[digit].sample_id, !shift);
            }
        }
    });
}
