/** Browser entry point: wire the session to the form and the log list. */

import { ChatSession, ChatState } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function render(state: ChatState): void {
  const status = el<HTMLElement>("status");
  const uptime = Object.values(state.extras)[0];
  switch (state.status) {
    case "connecting":
      status.textContent = "connecting…";
      break;
    case "live":
      status.textContent =
        `connected (${state.mode}) as ${state.client}` +
        (uptime !== undefined ? ` — server up ${uptime}s` : "");
      break;
    case "closed":
      status.textContent = "connection closed";
      break;
    case "error":
      status.textContent = `error: ${state.error}`;
      break;
  }
  status.dataset.state = state.status;

  const list = el<HTMLUListElement>("log");
  list.replaceChildren(
    ...state.log.map((line) => {
      const item = document.createElement("li");
      item.textContent = line;
      return item;
    }),
  );
}

const session = new ChatSession({
  url: window.location.origin,
  mode: "auto",
  onUpdate: render,
});

const form = el<HTMLFormElement>("chat-form");
form.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const name = el<HTMLInputElement>("name");
  const message = el<HTMLInputElement>("message");
  if (name.value && message.value) {
    session.submit(name.value, message.value);
    message.value = "";
    message.focus();
  }
});

session.connect().catch(() => {
  /* the error state is already rendered */
});
