/** Small DOM helpers: toasts, banners, side panel sections. */

export interface Ui {
  banner: HTMLDivElement;
  turnLine: HTMLDivElement;
  healthList: HTMLUListElement;
  toasts: HTMLDivElement;
  boardSlot: HTMLDivElement;
  adminBar: HTMLDivElement;
  showBanner(text: string, kind?: "info" | "warn" | "conflict"): void;
  clearBanner(): void;
  toast(text: string): void;
}

export function buildUi(root: HTMLElement, title: string): Ui {
  root.innerHTML = "";
  const header = document.createElement("header");
  header.textContent = title;
  header.className = "app-title";
  const banner = document.createElement("div");
  banner.className = "banner hidden";
  const main = document.createElement("main");
  const boardSlot = document.createElement("div");
  boardSlot.className = "board-slot";
  const side = document.createElement("aside");
  const turnLine = document.createElement("div");
  turnLine.className = "turn-line";
  const adminBar = document.createElement("div");
  adminBar.className = "admin-bar";
  const healthTitle = document.createElement("h3");
  healthTitle.textContent = "Production units";
  const healthList = document.createElement("ul");
  healthList.className = "unit-health";
  const toasts = document.createElement("div");
  toasts.className = "toasts";
  side.append(turnLine, adminBar, healthTitle, healthList);
  main.append(boardSlot, side);
  root.append(header, banner, main, toasts);
  return {
    banner,
    turnLine,
    healthList,
    toasts,
    boardSlot,
    adminBar,
    showBanner(text, kind = "info") {
      banner.textContent = text;
      banner.className = `banner ${kind}`;
    },
    clearBanner() {
      banner.textContent = "";
      banner.className = "banner hidden";
    },
    toast(text) {
      const node = document.createElement("div");
      node.className = "toast";
      node.textContent = text;
      toasts.appendChild(node);
      setTimeout(() => node.remove(), 4000);
    },
  };
}
