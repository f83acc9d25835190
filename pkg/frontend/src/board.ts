/** SVG board: 24 clickable intersections, two clickable tray zones.
 *
 * The board is redrawn only from GameState publications; nothing here
 * mutates occupations on its own.
 */

import {
  BOARD_FIELDS,
  LINES,
  gridPosition,
  type GameStateWire,
  type Occupation,
  type TrayName,
} from "./protocol.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const CELL = 60;
const MARGIN = 50;
const TRAY_WIDTH = 36;

export type ClickTarget = string; // field name or "tray1" / "tray2"

export interface BoardView {
  root: SVGSVGElement;
  update(state: GameStateWire | null): void;
  setSelected(target: ClickTarget | null): void;
  setTrayCounts(tray1: number, tray2: number): void;
  occupationOf(field: string): Occupation;
}

function point(field: string): [number, number] {
  const [col, row] = gridPosition(field);
  return [MARGIN + TRAY_WIDTH + col * CELL, MARGIN + (6 - row) * CELL];
}

export function createBoard(
  onClick: (target: ClickTarget) => void,
): BoardView {
  const width = 2 * (MARGIN + TRAY_WIDTH) + 6 * CELL;
  const height = 2 * MARGIN + 6 * CELL;
  const root = document.createElementNS(SVG_NS, "svg");
  root.setAttribute("viewBox", `0 0 ${width} ${height}`);
  root.setAttribute("class", "board");

  for (const [a, , c] of LINES) {
    const [x1, y1] = point(a);
    const [x2, y2] = point(c);
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(x1));
    line.setAttribute("y1", String(y1));
    line.setAttribute("x2", String(x2));
    line.setAttribute("y2", String(y2));
    line.setAttribute("class", "grid-line");
    root.appendChild(line);
  }

  const trayRects = new Map<TrayName, SVGRectElement>();
  const trayLabels = new Map<TrayName, SVGTextElement>();
  const trayX: Record<TrayName, number> = {
    tray1: 6,
    tray2: width - 6 - TRAY_WIDTH,
  };
  for (const tray of ["tray1", "tray2"] as TrayName[]) {
    const rect = document.createElementNS(SVG_NS, "rect");
    rect.setAttribute("x", String(trayX[tray]));
    rect.setAttribute("y", String(MARGIN));
    rect.setAttribute("width", String(TRAY_WIDTH));
    rect.setAttribute("height", String(6 * CELL));
    rect.setAttribute("rx", "8");
    rect.setAttribute("class", `tray ${tray}`);
    rect.dataset.target = tray;
    rect.addEventListener("click", () => onClick(tray));
    root.appendChild(rect);
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(trayX[tray] + TRAY_WIDTH / 2));
    label.setAttribute("y", String(MARGIN + 6 * CELL + 24));
    label.setAttribute("class", "tray-label");
    label.setAttribute("text-anchor", "middle");
    label.textContent = "9";
    root.appendChild(label);
    trayRects.set(tray, rect);
    trayLabels.set(tray, label);
  }

  const tokens = new Map<string, SVGCircleElement>();
  for (const field of BOARD_FIELDS) {
    const [x, y] = point(field);
    const circle = document.createElementNS(SVG_NS, "circle");
    circle.setAttribute("cx", String(x));
    circle.setAttribute("cy", String(y));
    circle.setAttribute("r", "16");
    circle.setAttribute("class", "field empty");
    circle.dataset.field = field;
    circle.dataset.occupation = "Empty";
    circle.addEventListener("click", () => onClick(field));
    root.appendChild(circle);
    tokens.set(field, circle);

    const tag = document.createElementNS(SVG_NS, "text");
    tag.setAttribute("x", String(x));
    tag.setAttribute("y", String(y + 30));
    tag.setAttribute("class", "field-name");
    tag.setAttribute("text-anchor", "middle");
    tag.textContent = field;
    root.appendChild(tag);
  }

  const classFor: Record<Occupation, string> = {
    Empty: "field empty",
    PlayerOne: "field player-one",
    PlayerTwo: "field player-two",
  };

  let selected: ClickTarget | null = null;

  function applySelection(): void {
    for (const [field, circle] of tokens) {
      circle.classList.toggle("selected", field === selected);
    }
    for (const [tray, rect] of trayRects) {
      rect.classList.toggle("selected", tray === selected);
    }
  }

  return {
    root,
    update(state: GameStateWire | null): void {
      if (state === null) {
        for (const circle of tokens.values()) {
          circle.setAttribute("class", classFor.Empty);
          circle.dataset.occupation = "Empty";
        }
        applySelection();
        return;
      }
      for (const entry of state.board) {
        const circle = tokens.get(entry.field);
        if (!circle) continue;
        circle.setAttribute("class", classFor[entry.occupation]);
        circle.dataset.occupation = entry.occupation;
      }
      applySelection();
    },
    setSelected(target: ClickTarget | null): void {
      selected = target;
      applySelection();
    },
    setTrayCounts(tray1: number, tray2: number): void {
      trayLabels.get("tray1")!.textContent = String(tray1);
      trayLabels.get("tray2")!.textContent = String(tray2);
    },
    occupationOf(field: string): Occupation {
      return (tokens.get(field)?.dataset.occupation ?? "Empty") as Occupation;
    },
  };
}
